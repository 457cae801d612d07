/**
 * TCP server for the remote-denoiser protocol.
 *
 * One handler per connection, one request at a time per connection; model
 * evaluation is stateless. Well-framed but invalid requests get a non-zero
 * status and the connection stays open; an unrecognizable request magic
 * forfeits the framing, so the error response is followed by a close.
 */

import net from "node:net";

import { EvaluationError, fromEpsilon, GmmDenoiser } from "./model.js";
import {
  encodeError,
  encodeResponse,
  parseRequest,
  STATUS_DIMENSION,
  STATUS_EVAL,
  WireParam,
} from "./protocol.js";

export type ServedParam = WireParam | "requested";

export interface HandleResult {
  out: Buffer | null;
  consumed: number;
  close: boolean;
}

/** Handle the frame at the front of `pending`; pure state transition. */
export function handleFrame(
  pending: Buffer,
  model: GmmDenoiser,
  servedParam: ServedParam = "requested"
): HandleResult {
  const res = parseRequest(pending);
  if (res.kind === "incomplete") return { out: null, consumed: 0, close: false };
  if (res.kind === "bad") {
    return { out: encodeError(res.status, res.message), consumed: res.consumed, close: res.fatal };
  }
  const { header, x, consumed } = res;
  if (header.dim !== model.dim) {
    const msg = `endpoint serves dim ${model.dim}, request has dim ${header.dim}`;
    return { out: encodeError(STATUS_DIMENSION, msg), consumed, close: false };
  }
  const param = servedParam === "requested" ? header.param : servedParam;
  try {
    const eps = model.epsilon(x, header.batch, header.t);
    const values = fromEpsilon(eps, x, model.schedule, header.t, param);
    return { out: encodeResponse(param, values), consumed, close: false };
  } catch (err) {
    const msg = err instanceof EvaluationError ? err.message : `evaluation failed: ${err}`;
    return { out: encodeError(STATUS_EVAL, msg), consumed, close: false };
  }
}

export function createDenoiserServer(
  model: GmmDenoiser,
  servedParam: ServedParam = "requested"
): net.Server {
  return net.createServer((socket) => {
    let pending = Buffer.alloc(0);
    socket.on("data", (chunk) => {
      pending = pending.length === 0 ? chunk : Buffer.concat([pending, chunk]);
      while (pending.length > 0) {
        let res: HandleResult;
        try {
          res = handleFrame(pending, model, servedParam);
        } catch (err) {
          // a parser bug must not take the process down; drop the connection
          console.error("handler error:", err);
          socket.destroy();
          return;
        }
        if (res.out === null) break;
        socket.write(res.out);
        if (res.close) {
          socket.end();
          return;
        }
        pending = pending.subarray(res.consumed);
      }
    });
    socket.on("error", (err) => {
      console.error("socket error:", err.message);
      socket.destroy();
    });
  });
}
