import { describe, expect, it } from "vitest";

import { base64FromBytes, bytesEqual, bytesFromBase64 } from "../src/depth.js";

describe("payload byte handling", () => {
  it("round-trips bytes through base64", () => {
    const bytes = new Uint8Array(4099);
    for (let i = 0; i < bytes.length; i++) bytes[i] = (i * 37 + 11) % 256;
    const again = bytesFromBase64(base64FromBytes(bytes));
    expect(bytesEqual(again, bytes)).toBe(true);
  });

  it("decodes known base64", () => {
    expect(Array.from(bytesFromBase64("AAEC/w=="))).toEqual([0, 1, 2, 255]);
  });

  it("compares byte strings exactly", () => {
    const a = new Uint8Array([1, 2, 3]);
    expect(bytesEqual(a, new Uint8Array([1, 2, 3]))).toBe(true);
    expect(bytesEqual(a, new Uint8Array([1, 2, 4]))).toBe(false);
    expect(bytesEqual(a, new Uint8Array([1, 2]))).toBe(false);
  });
});
