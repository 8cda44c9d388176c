import { type ChildProcess, spawn } from "child_process";
import * as net from "net";
import * as path from "path";
import * as readline from "readline";
import { afterEach, describe, expect, it } from "vitest";

import { decodeF32LE, encodeF32LE } from "../src/protocol";

const MAIN = path.join(__dirname, "..", "dist", "main.js");
const TIMEOUT = 15000;

class LineReader {
  private lines: string[] = [];
  private waiters: Array<(line: string) => void> = [];

  constructor(stream: NodeJS.ReadableStream) {
    readline.createInterface({ input: stream, terminal: false }).on("line", (line) => {
      const waiter = this.waiters.shift();
      if (waiter !== undefined) {
        waiter(line);
      } else {
        this.lines.push(line);
      }
    });
  }

  next(): Promise<string> {
    const queued = this.lines.shift();
    if (queued !== undefined) {
      return Promise.resolve(queued);
    }
    return new Promise((resolve, reject) => {
      this.waiters.push(resolve);
      setTimeout(() => reject(new Error("timed out waiting for a line")), TIMEOUT - 1000);
    });
  }
}

function exitCode(proc: ChildProcess): Promise<number | null> {
  return new Promise((resolve) => proc.on("exit", (code) => resolve(code)));
}

function predictLine(id: number, w: number, h: number, points: object[]): string {
  const image = { w, h, enc: "b64f32", data: encodeF32LE(new Float32Array(w * h)) };
  return JSON.stringify({ id, op: "predict", image, points }) + "\n";
}

describe("bridge process", () => {
  let proc: ChildProcess | undefined;

  afterEach(() => {
    proc?.kill();
    proc = undefined;
  });

  it(
    "serves hello and predict over stdio and survives garbage",
    async () => {
      proc = spawn("node", [MAIN, "--transport", "stdio", "--model", "echo"]);
      const out = new LineReader(proc.stdout!);

      proc.stdin!.write(JSON.stringify({ id: 1, op: "hello" }) + "\n");
      const hello = JSON.parse(await out.next());
      expect(hello.ok).toBe(true);
      expect(hello.id).toBe(1);
      expect(typeof hello.backend).toBe("string");
      expect(typeof hello.version).toBe("string");

      proc.stdin!.write("this is not json\n");
      const bad = JSON.parse(await out.next());
      expect(bad.ok).toBe(false);
      expect(bad.id).toBeNull();

      proc.stdin!.write(predictLine(2, 12, 10, [{ x: 6, y: 3, label: 1 }]));
      const reply = JSON.parse(await out.next());
      expect(reply.ok).toBe(true);
      expect(reply.id).toBe(2);
      const mask = decodeF32LE(reply.mask.data, 120);
      for (const v of mask) {
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(1);
      }

      proc.stdin!.end();
      expect(await exitCode(proc)).toBe(0);
    },
    TIMEOUT,
  );

  it(
    "reports checkpoint load failure on hello and exits nonzero",
    async () => {
      proc = spawn("node", [MAIN, "--transport", "stdio", "--model", "/nonexistent/weights.pth"]);
      const out = new LineReader(proc.stdout!);
      proc.stdin!.write(JSON.stringify({ id: 1, op: "hello" }) + "\n");
      const hello = JSON.parse(await out.next());
      expect(hello.ok).toBe(false);
      expect(hello.error).toMatch(/cannot load checkpoint/);
      expect(await exitCode(proc)).toBe(1);
    },
    TIMEOUT,
  );

  it(
    "rejects unknown transports and flags with exit code 2",
    async () => {
      proc = spawn("node", [MAIN, "--transport", "carrier-pigeon"]);
      expect(await exitCode(proc)).toBe(2);
      proc = spawn("node", [MAIN, "--frobnicate"]);
      expect(await exitCode(proc)).toBe(2);
    },
    TIMEOUT,
  );

  it(
    "serves the same protocol over tcp",
    async () => {
      proc = spawn("node", [MAIN, "--transport", "tcp:0", "--model", "echo"]);
      const stderr = new LineReader(proc.stderr!);
      const announced = await stderr.next();
      const port = Number(/port (\d+)/.exec(announced)?.[1]);
      expect(port).toBeGreaterThan(0);

      const socket = net.createConnection({ host: "127.0.0.1", port });
      await new Promise<void>((resolve) => socket.once("connect", resolve));
      const out = new LineReader(socket);

      socket.write(JSON.stringify({ id: 1, op: "hello" }) + "\n");
      const hello = JSON.parse(await out.next());
      expect(hello.ok).toBe(true);
      expect(hello.backend).toBe("echo");

      socket.write(predictLine(2, 9, 9, [{ x: 4, y: 4, label: 1 }]));
      const reply = JSON.parse(await out.next());
      expect(reply.ok).toBe(true);
      expect(decodeF32LE(reply.mask.data, 81)).toHaveLength(81);

      socket.end();
    },
    TIMEOUT,
  );
});
