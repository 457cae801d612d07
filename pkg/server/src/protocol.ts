/**
 * Wire codec for the remote-denoiser protocol. All integers little-endian.
 *
 * Request:  "DCR1" | u32 header_len | UTF-8 JSON header | batch*dim float32
 * Response: "DCS1" | u8 status | u32 header_len | UTF-8 JSON header | body
 *
 * Status 0 carries a batch*dim float32 payload; any other status carries
 * u32 msg_len + UTF-8 message. Response headers are serialized with the
 * same spacing Python's json.dumps uses, so both ends emit identical bytes
 * for identical content.
 */

export const MAGIC_REQUEST = Buffer.from("DCR1", "ascii");
export const MAGIC_RESPONSE = Buffer.from("DCS1", "ascii");

export const STATUS_OK = 0;
export const STATUS_MALFORMED = 1;
export const STATUS_VERSION = 2;
export const STATUS_DIMENSION = 3;
export const STATUS_EVAL = 4;

export const MAX_HEADER = 1 << 20;
// refuse to allocate absurd payloads (2^24 floats = 64 MiB) instead of dying
export const MAX_ELEMS = 1 << 24;

export const WIRE_PARAMS = ["eps", "x0", "v"] as const;
export type WireParam = (typeof WIRE_PARAMS)[number];

export interface RequestHeader {
  batch: number;
  dim: number;
  t: number;
  param: WireParam;
  cond: number | null;
}

export type ParseResult =
  | { kind: "incomplete" }
  | { kind: "request"; header: RequestHeader; x: Float64Array; consumed: number }
  | { kind: "bad"; status: number; message: string; consumed: number; fatal: boolean };

function bad(status: number, message: string, consumed: number, fatal = false): ParseResult {
  return { kind: "bad", status, message, consumed, fatal };
}

// format header values the way the Python side's repr() does, single quotes and all
function shown(v: unknown): string {
  return typeof v === "string" ? `'${v}'` : JSON.stringify(v);
}

/**
 * Try to parse one request frame from the front of `pending`.
 *
 * Returns "incomplete" until a full frame is buffered. Semantic errors in a
 * well-framed request consume the whole frame (payload included) so the
 * connection stays usable; an unrecognizable magic is fatal, and a bogus
 * header length means the payload boundary is unknowable, so parsing resumes
 * right after the header length field and takes its chances.
 */
export function parseRequest(pending: Buffer): ParseResult {
  if (pending.length < 4) return { kind: "incomplete" };
  if (!pending.subarray(0, 4).equals(MAGIC_REQUEST)) {
    return bad(STATUS_VERSION, "bad request magic", 4, true);
  }
  if (pending.length < 8) return { kind: "incomplete" };
  const hlen = pending.readUInt32LE(4);
  if (hlen === 0 || hlen > MAX_HEADER) {
    return bad(STATUS_MALFORMED, `header length ${hlen} out of bounds`, 8);
  }
  if (pending.length < 8 + hlen) return { kind: "incomplete" };
  let header: unknown;
  try {
    header = JSON.parse(pending.subarray(8, 8 + hlen).toString("utf-8"));
  } catch {
    return bad(STATUS_MALFORMED, "unparseable request header", 8 + hlen);
  }
  if (typeof header !== "object" || header === null || Array.isArray(header)) {
    return bad(STATUS_MALFORMED, "request header must be a JSON object", 8 + hlen);
  }
  const h = header as Record<string, unknown>;
  const missing = ["batch", "dim", "t", "param"].filter((k) => !(k in h)).sort();
  if (missing.length > 0) {
    return bad(STATUS_MALFORMED, `request header missing [${missing.map((k) => `'${k}'`).join(", ")}]`, 8 + hlen);
  }
  const batch = h.batch;
  const dim = h.dim;
  if (!Number.isInteger(batch) || !Number.isInteger(dim) || (batch as number) < 1 || (dim as number) < 1) {
    return bad(STATUS_MALFORMED, `bad batch/dim: ${shown(batch)}/${shown(dim)}`, 8 + hlen);
  }
  const b = batch as number;
  const d = dim as number;
  if (b > MAX_ELEMS / d) {
    return bad(STATUS_MALFORMED, `payload too large: ${b}*${d} floats`, 8 + hlen);
  }
  // payload boundary is known from here on; semantic errors eat the frame
  const plen = b * d * 4;
  if (pending.length < 8 + hlen + plen) return { kind: "incomplete" };
  const consumed = 8 + hlen + plen;
  if (typeof h.param !== "string" || !(WIRE_PARAMS as readonly string[]).includes(h.param)) {
    return bad(STATUS_MALFORMED, `unknown wire parameterization ${shown(h.param)}`, consumed);
  }
  const cond = h.cond ?? null;
  if (cond !== null && !Number.isInteger(cond)) {
    return bad(STATUS_MALFORMED, `cond must be an integer or null, got ${shown(cond)}`, consumed);
  }
  if (typeof h.t !== "number") {
    return bad(STATUS_MALFORMED, `t must be a number, got ${shown(h.t)}`, consumed);
  }
  const x = new Float64Array(b * d);
  for (let i = 0; i < x.length; i++) {
    x[i] = pending.readFloatLE(8 + hlen + i * 4);
  }
  return {
    kind: "request",
    header: { batch: b, dim: d, t: h.t, param: h.param as WireParam, cond: cond as number | null },
    x,
    consumed,
  };
}

/** Status-0 response: values go out as float32, header matches Python's spacing. */
export function encodeResponse(param: WireParam, values: Float64Array): Buffer {
  const header = Buffer.from(`{"param": "${param}"}`, "utf-8");
  const head = Buffer.alloc(9);
  MAGIC_RESPONSE.copy(head, 0);
  head.writeUInt8(STATUS_OK, 4);
  head.writeUInt32LE(header.length, 5);
  const payload = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    payload.writeFloatLE(Math.fround(values[i]), i * 4);
  }
  return Buffer.concat([head, header, payload]);
}

export function encodeError(status: number, message: string): Buffer {
  if (status === STATUS_OK) throw new Error("error frames need a non-zero status");
  const msg = Buffer.from(message, "utf-8");
  const head = Buffer.alloc(9);
  MAGIC_RESPONSE.copy(head, 0);
  head.writeUInt8(status, 4);
  head.writeUInt32LE(2, 5);
  const mlen = Buffer.alloc(4);
  mlen.writeUInt32LE(msg.length, 0);
  return Buffer.concat([head, Buffer.from("{}", "utf-8"), mlen, msg]);
}

/** Client-side request encoder, used by the tests to talk to the server. */
export function encodeRequest(
  x: number[],
  batch: number,
  dim: number,
  t: number,
  param: string,
  cond: number | null = null
): Buffer {
  const header = Buffer.from(JSON.stringify({ batch, dim, t, param, cond }), "utf-8");
  const head = Buffer.alloc(8);
  MAGIC_REQUEST.copy(head, 0);
  head.writeUInt32LE(header.length, 4);
  const payload = Buffer.alloc(x.length * 4);
  for (let i = 0; i < x.length; i++) {
    payload.writeFloatLE(Math.fround(x[i]), i * 4);
  }
  return Buffer.concat([head, header, payload]);
}
