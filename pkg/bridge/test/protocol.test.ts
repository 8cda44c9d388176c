import { describe, expect, it } from "vitest";

import {
  decodeF32LE,
  decodeImage,
  decodePoints,
  encodeF32LE,
  pngDimensions,
  ProtocolError,
} from "../src/protocol";

function minimalPng(w: number, h: number): Buffer {
  const buf = Buffer.alloc(33);
  Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]).copy(buf, 0);
  buf.writeUInt32BE(13, 8);
  buf.write("IHDR", 12, "ascii");
  buf.writeUInt32BE(w, 16);
  buf.writeUInt32BE(h, 20);
  buf.writeUInt8(8, 24); // bit depth
  buf.writeUInt8(0, 25); // grayscale
  return buf;
}

describe("f32 codec", () => {
  it("round-trips values exactly at f32 precision", () => {
    const values = new Float32Array([0, 0.25, 1, 0.3333333, 1e-7]);
    const decoded = decodeF32LE(encodeF32LE(values), values.length);
    expect(Array.from(decoded)).toEqual(Array.from(values));
  });

  it("rejects strings that are not base64", () => {
    expect(() => decodeF32LE("not base64!!!", 2)).toThrow(ProtocolError);
  });

  it("rejects payloads of the wrong size", () => {
    const data = encodeF32LE(new Float32Array([1, 2, 3]));
    expect(() => decodeF32LE(data, 4)).toThrow(/expected 16/);
  });
});

describe("pngDimensions", () => {
  it("reads width and height from the IHDR chunk", () => {
    expect(pngDimensions(minimalPng(640, 480))).toEqual({ w: 640, h: 480 });
  });

  it("rejects non-PNG payloads", () => {
    expect(() => pngDimensions(Buffer.from("plainly not a png, honest"))).toThrow(ProtocolError);
  });
});

describe("decodeImage", () => {
  it("decodes b64f32 payloads to pixels", () => {
    const pixels = new Float32Array([0.1, 0.9, 0.5, 0.25, 0, 1]);
    const img = decodeImage({ w: 3, h: 2, enc: "b64f32", data: encodeF32LE(pixels) });
    expect(img.w).toBe(3);
    expect(img.h).toBe(2);
    expect(Array.from(img.data ?? [])).toEqual(Array.from(pixels));
  });

  it("keeps png_b64 dimensions but leaves pixels null", () => {
    const img = decodeImage({
      w: 12,
      h: 7,
      enc: "png_b64",
      data: minimalPng(12, 7).toString("base64"),
    });
    expect(img).toEqual({ w: 12, h: 7, data: null });
  });

  it("rejects png_b64 whose IHDR disagrees with the header", () => {
    const payload = { w: 5, h: 5, enc: "png_b64", data: minimalPng(6, 5).toString("base64") };
    expect(() => decodeImage(payload)).toThrow(/6x5/);
  });

  it("rejects unknown encodings and bad dimensions", () => {
    expect(() => decodeImage({ w: 2, h: 2, enc: "hex", data: "" })).toThrow(/unknown image encoding/);
    expect(() => decodeImage({ w: 0, h: 2, enc: "b64f32", data: "" })).toThrow(/image.w/);
    expect(() => decodeImage({ w: 2, h: 1.5, enc: "b64f32", data: "" })).toThrow(/image.h/);
    expect(() => decodeImage(null)).toThrow(/no image/);
  });
});

describe("decodePoints", () => {
  it("accepts well-formed records", () => {
    const pts = decodePoints([
      { x: 1.5, y: 2, label: 1 },
      { x: 0, y: 0, label: 0 },
    ]);
    expect(pts).toHaveLength(2);
    expect(pts[0]).toEqual({ x: 1.5, y: 2, label: 1 });
  });

  it("rejects non-arrays, bad coordinates, and bad labels", () => {
    expect(() => decodePoints({})).toThrow(/must be an array/);
    expect(() => decodePoints([{ x: NaN, y: 0, label: 1 }])).toThrow(/finite/);
    expect(() => decodePoints([{ x: 0, y: 0, label: 2 }])).toThrow(/label 0 or 1/);
    expect(() => decodePoints([null])).toThrow(/not an object/);
  });
});
