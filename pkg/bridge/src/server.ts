/**
 * Request loop shared by the stdio and TCP transports.
 *
 * One Session per connection; requests are handled strictly in order.
 * Malformed lines answer `ok:false` and never kill the session. A model
 * that failed to load answers the handshake with its error, and the
 * transport then shuts the process down with a nonzero code.
 */

import * as net from "net";
import * as readline from "readline";

import { Model } from "./echo";
import { decodeImage, decodePoints, encodeF32LE, ProtocolError } from "./protocol";

export interface SessionOutcome {
  line: string;
  /** Set after reporting a load failure: transport must exit nonzero. */
  fatal: boolean;
}

export class Session {
  private requestCount = 0;

  constructor(
    private readonly model: Model | null,
    private readonly version: string,
    private readonly loadError: string | null = null,
  ) {}

  handleLine(raw: string): SessionOutcome {
    let request: unknown;
    try {
      request = JSON.parse(raw);
    } catch {
      return this.error(null, "line is not valid JSON");
    }
    if (typeof request !== "object" || request === null || Array.isArray(request)) {
      return this.error(null, "request must be a JSON object");
    }
    const req = request as { id?: unknown; op?: unknown; image?: unknown; points?: unknown };
    const id = typeof req.id === "number" ? req.id : null;

    if (req.op === "hello") {
      if (this.loadError !== null || this.model === null) {
        return { ...this.error(id, this.loadError ?? "no model loaded"), fatal: true };
      }
      return this.reply(id, { backend: this.model.name, version: this.version });
    }
    if (req.op === "predict") {
      return this.predict(id, req.image, req.points);
    }
    return this.error(id, `unknown op ${JSON.stringify(req.op)}`);
  }

  private predict(id: number | null, image: unknown, points: unknown): SessionOutcome {
    if (this.model === null) {
      return this.error(id, this.loadError ?? "no model loaded");
    }
    try {
      const decoded = decodeImage(image);
      const mask = this.model.predict(decoded, decodePoints(points));
      this.requestCount += 1;
      return this.reply(id, {
        mask: { w: decoded.w, h: decoded.h, enc: "b64f32", data: encodeF32LE(mask) },
      });
    } catch (err) {
      if (err instanceof ProtocolError) {
        return this.error(id, err.message);
      }
      throw err;
    }
  }

  private reply(id: number | null, fields: object): SessionOutcome {
    return { line: JSON.stringify({ id, ok: true, ...fields }), fatal: false };
  }

  private error(id: number | null, message: string): SessionOutcome {
    return { line: JSON.stringify({ id, ok: false, error: message }), fatal: false };
  }
}

export function serveStdio(session: Session): void {
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (line.trim() === "") {
      return;
    }
    const outcome = session.handleLine(line);
    if (outcome.fatal) {
      rl.close();
      // Flush the error reply before exiting; a paused stdin pipe would
      // otherwise keep the event loop alive indefinitely.
      process.stdout.write(outcome.line + "\n", () => process.exit(1));
      return;
    }
    process.stdout.write(outcome.line + "\n");
  });
}

export function serveTcp(port: number, makeSession: () => Session): net.Server {
  const server = net.createServer((socket) => {
    const session = makeSession();
    const rl = readline.createInterface({ input: socket, terminal: false });
    rl.on("line", (line) => {
      if (line.trim() === "") {
        return;
      }
      const outcome = session.handleLine(line);
      socket.write(outcome.line + "\n");
      if (outcome.fatal) {
        socket.end();
        server.close(() => {
          process.exitCode = 1;
        });
      }
    });
    socket.on("error", () => rl.close());
  });
  server.listen(port, () => {
    process.stderr.write(`listening on tcp port ${(server.address() as net.AddressInfo).port}\n`);
  });
  return server;
}
