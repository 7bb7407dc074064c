import { describe, expect, it } from "vitest";

import { overlayVariance, renderPreview } from "../src/colormap.js";

const GRID = [
  [0, 64, 128],
  [192, 255, 32],
];

describe("renderPreview", () => {
  it("produces an RGBA image matching the preview shape", () => {
    const image = renderPreview(GRID);
    expect(image.width).toBe(3);
    expect(image.height).toBe(2);
    expect(image.pixels.length).toBe(3 * 2 * 4);
    for (let i = 3; i < image.pixels.length; i += 4) {
      expect(image.pixels[i]).toBe(255); // fully opaque
    }
  });

  it("renders identical previews pixel-identically", () => {
    const a = renderPreview(GRID);
    const b = renderPreview(GRID.map((row) => [...row]));
    expect(Array.from(a.pixels)).toEqual(Array.from(b.pixels));
  });

  it("maps distinct preview bytes to distinct colors", () => {
    const image = renderPreview([[0, 255]]);
    const near = Array.from(image.pixels.slice(0, 3));
    const far = Array.from(image.pixels.slice(4, 7));
    expect(near).not.toEqual(far);
  });

  it("rejects ragged or empty grids", () => {
    expect(() => renderPreview([])).toThrow();
    expect(() => renderPreview([[1, 2], [3]])).toThrow();
  });
});

describe("overlayVariance", () => {
  it("leaves zero-variance pixels untouched and tints high-variance ones", () => {
    const base = renderPreview(GRID);
    const overlaid = overlayVariance(base, [
      [0, 0, 255],
      [0, 0, 0],
    ]);
    // zero variance: identical pixels
    expect(Array.from(overlaid.pixels.slice(0, 8))).toEqual(
      Array.from(base.pixels.slice(0, 8)),
    );
    // max variance: changed pixels
    expect(Array.from(overlaid.pixels.slice(8, 11))).not.toEqual(
      Array.from(base.pixels.slice(8, 11)),
    );
  });

  it("does not mutate the base image", () => {
    const base = renderPreview(GRID);
    const before = Array.from(base.pixels);
    overlayVariance(base, [
      [255, 255, 255],
      [255, 255, 255],
    ]);
    expect(Array.from(base.pixels)).toEqual(before);
  });

  it("rejects mismatched shapes", () => {
    const base = renderPreview(GRID);
    expect(() => overlayVariance(base, [[0, 0]])).toThrow();
  });
});
