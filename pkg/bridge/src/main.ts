#!/usr/bin/env node
/**
 * CLI entry: `bridge --transport stdio|tcp:PORT --model echo|<checkpoint-path>`.
 *
 * The echo model needs no weights and exists so integration tests can
 * exercise the full cross-process protocol. Checkpoint paths require an
 * inference runtime this reference server does not bundle; the load
 * failure is reported on the handshake and the process exits nonzero.
 */

import * as fs from "fs";
import * as path from "path";

import { EchoModel, Model } from "./echo";
import { serveStdio, serveTcp, Session } from "./server";

interface CliArgs {
  transport: string;
  model: string;
}

function parseArgs(argv: string[]): CliArgs {
  const args: CliArgs = { transport: "stdio", model: "echo" };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    if (flag === "--transport" || flag === "--model") {
      const value = argv[i + 1];
      if (value === undefined) {
        throw new Error(`${flag} needs a value`);
      }
      if (flag === "--transport") {
        args.transport = value;
      } else {
        args.model = value;
      }
      i++;
    } else {
      throw new Error(`unknown argument ${flag}`);
    }
  }
  return args;
}

function resolveModel(spec: string): { model: Model | null; loadError: string | null } {
  if (spec === "echo") {
    return { model: new EchoModel(), loadError: null };
  }
  if (!fs.existsSync(spec)) {
    return { model: null, loadError: `cannot load checkpoint ${spec}: file not found` };
  }
  return {
    model: null,
    loadError: `cannot load checkpoint ${spec}: no inference runtime is bundled with this server`,
  };
}

function packageVersion(): string {
  const manifest = path.join(__dirname, "..", "package.json");
  try {
    return JSON.parse(fs.readFileSync(manifest, "utf8")).version ?? "0.0.0";
  } catch {
    return "0.0.0";
  }
}

function main(): void {
  let args: CliArgs;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n`);
    process.stderr.write("usage: bridge --transport stdio|tcp:PORT --model echo|<checkpoint-path>\n");
    process.exit(2);
  }

  const version = packageVersion();
  const { model, loadError } = resolveModel(args.model);
  const makeSession = () => new Session(model, version, loadError);

  if (args.transport === "stdio") {
    serveStdio(makeSession());
    return;
  }
  const tcp = /^tcp:(\d+)$/.exec(args.transport);
  if (tcp !== null) {
    serveTcp(Number(tcp[1]), makeSession);
    return;
  }
  process.stderr.write(`unknown transport ${args.transport}\n`);
  process.exit(2);
}

main();
