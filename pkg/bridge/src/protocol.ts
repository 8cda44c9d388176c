/**
 * Wire protocol: line-delimited JSON requests and responses.
 *
 * Image and mask payloads are base64-encoded little-endian float32,
 * row-major. Requests carry a numeric id; every response echoes the id of
 * the request it answers (or null when the line was too broken to tell).
 */

export class ProtocolError extends Error {}

export interface ImagePayload {
  w: number;
  h: number;
  enc: string;
  data: string;
}

export interface PromptRecord {
  x: number;
  y: number;
  label: 0 | 1;
}

export interface DecodedImage {
  w: number;
  h: number;
  /** Row-major pixels in [0,1]; null when only dimensions were recoverable. */
  data: Float32Array | null;
}

export function encodeF32LE(values: Float32Array): string {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i] as number, i * 4);
  }
  return buf.toString("base64");
}

export function decodeF32LE(data: string, count: number): Float32Array {
  if (typeof data !== "string" || !/^[A-Za-z0-9+/]*={0,2}$/.test(data)) {
    throw new ProtocolError("payload is not valid base64");
  }
  const buf = Buffer.from(data, "base64");
  if (buf.length !== count * 4) {
    throw new ProtocolError(`payload is ${buf.length} bytes, expected ${count * 4}`);
  }
  const out = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = buf.readFloatLE(i * 4);
  }
  return out;
}

const PNG_MAGIC = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

/** Width and height from a PNG IHDR chunk (first chunk by construction). */
export function pngDimensions(buf: Buffer): { w: number; h: number } {
  if (buf.length < 24 || !buf.subarray(0, 8).equals(PNG_MAGIC)) {
    throw new ProtocolError("payload is not a PNG");
  }
  if (buf.subarray(12, 16).toString("ascii") !== "IHDR") {
    throw new ProtocolError("PNG is missing its IHDR chunk");
  }
  return { w: buf.readUInt32BE(16), h: buf.readUInt32BE(20) };
}

function requirePositiveInt(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value <= 0) {
    throw new ProtocolError(`${name} must be a positive integer`);
  }
  return value;
}

export function decodeImage(image: unknown): DecodedImage {
  if (typeof image !== "object" || image === null) {
    throw new ProtocolError("request has no image object");
  }
  const img = image as Partial<ImagePayload>;
  const w = requirePositiveInt(img.w, "image.w");
  const h = requirePositiveInt(img.h, "image.h");
  if (img.enc === "b64f32") {
    return { w, h, data: decodeF32LE(img.data ?? "", w * h) };
  }
  if (img.enc === "png_b64") {
    // Dimension check only; models that need pixels reject data === null.
    const dims = pngDimensions(Buffer.from(img.data ?? "", "base64"));
    if (dims.w !== w || dims.h !== h) {
      throw new ProtocolError(`PNG is ${dims.w}x${dims.h}, header says ${w}x${h}`);
    }
    return { w, h, data: null };
  }
  throw new ProtocolError(`unknown image encoding ${JSON.stringify(img.enc)}`);
}

export function decodePoints(points: unknown): PromptRecord[] {
  if (!Array.isArray(points)) {
    throw new ProtocolError("points must be an array");
  }
  return points.map((p, i) => {
    if (typeof p !== "object" || p === null) {
      throw new ProtocolError(`point ${i} is not an object`);
    }
    const { x, y, label } = p as { x?: unknown; y?: unknown; label?: unknown };
    if (typeof x !== "number" || typeof y !== "number" || !Number.isFinite(x) || !Number.isFinite(y)) {
      throw new ProtocolError(`point ${i} needs finite numeric x and y`);
    }
    if (label !== 0 && label !== 1) {
      throw new ProtocolError(`point ${i} needs label 0 or 1`);
    }
    return { x, y, label };
  });
}
