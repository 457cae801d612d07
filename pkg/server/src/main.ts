/**
 * CLI entry point.
 *
 *   node dist/main.js --port 7070                        # N(0, I) in 1-D
 *   node dist/main.js --model gaussian --mu 0,0 --scale 1
 *   node dist/main.js --model gmm --means '[[-1],[1.5]]' --weights '[0.5,0.5]' --scale 0.3
 *
 * The served dimension is fixed at startup by the model spec. --port 0 binds
 * an ephemeral port; the actual address is printed once listening.
 */

import { parseArgs } from "node:util";

import { GmmDenoiser, VpLinearSchedule } from "./model.js";
import { createDenoiserServer, ServedParam } from "./server.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(2);
}

function parseJson(raw: string, what: string): unknown {
  try {
    return JSON.parse(raw);
  } catch {
    fail(`${what} is not valid JSON: ${raw}`);
  }
}

function parseCli(argv?: string[]) {
  try {
    return parseArgs({
      args: argv,
      options: {
        host: { type: "string", default: "127.0.0.1" },
        port: { type: "string", default: "7070" },
        model: { type: "string", default: "gaussian" },
        mu: { type: "string", default: "0" },
        scale: { type: "string", default: "1" },
        means: { type: "string" },
        weights: { type: "string" },
        param: { type: "string", default: "requested" },
        beta0: { type: "string", default: "0.1" },
        beta1: { type: "string", default: "20" },
      },
    });
  } catch (err) {
    fail(err instanceof Error ? err.message : String(err));
  }
}

const { values: args } = parseCli();

const port = Number(args.port);
if (!Number.isInteger(port) || port < 0 || port > 65535) fail(`bad port ${args.port}`);
const scale = Number(args.scale);
if (!(scale > 0)) fail(`scale must be positive, got ${args.scale}`);
if (!["requested", "eps", "x0", "v"].includes(args.param!)) {
  fail(`param must be requested, eps, x0, or v, got ${args.param}`);
}

let means: number[][];
let weights: number[];
if (args.model === "gaussian") {
  const mu = args.mu!.split(",").map(Number);
  if (mu.some((v) => !Number.isFinite(v))) fail(`bad --mu ${args.mu}`);
  means = [mu];
  weights = [1.0];
} else if (args.model === "gmm") {
  if (!args.means || !args.weights) fail("gmm needs --means and --weights");
  means = parseJson(args.means, "--means") as number[][];
  weights = parseJson(args.weights, "--weights") as number[];
} else {
  fail(`unknown model ${args.model}, expected gaussian or gmm`);
}

const schedule = new VpLinearSchedule(Number(args.beta0), Number(args.beta1));
let model: GmmDenoiser;
try {
  model = new GmmDenoiser(schedule, means, weights, scale);
} catch (err) {
  fail(err instanceof Error ? err.message : String(err));
}

const server = createDenoiserServer(model, args.param as ServedParam);
server.on("error", (err) => {
  console.error(`error: cannot listen on ${args.host}:${port}: ${err.message}`);
  process.exit(1);
});
server.listen(port, args.host, () => {
  const addr = server.address();
  const shown = typeof addr === "object" && addr !== null ? `${addr.address}:${addr.port}` : String(addr);
  console.log(`serving ${args.model} (dim ${model.dim}) on ${shown}`);
});
