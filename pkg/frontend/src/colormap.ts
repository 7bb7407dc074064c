/** Colormapped rendering of server previews.
 *
 * The service normalizes every preview to the session's shared depth
 * range (fixed at the first estimate), so a palette lookup here keeps
 * all modes of a session visually comparable and renders identical
 * payloads pixel-identically.  No depth math happens client-side.
 */

export interface RenderedImage {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel — ready for ImageData. */
  pixels: Uint8ClampedArray<ArrayBuffer>;
}

type Stop = [number, number, number];

/** Near-to-far ramp: warm ochre for close surfaces through teal to deep
 * blue for far ones. */
const DEPTH_STOPS: Stop[] = [
  [230, 170, 60],
  [220, 110, 70],
  [160, 80, 120],
  [70, 100, 160],
  [40, 60, 110],
];

/** Low-to-high ambiguity ramp used by the variance overlay. */
const HEAT_STOPS: Stop[] = [
  [40, 40, 40],
  [180, 40, 130],
  [255, 90, 40],
  [255, 220, 80],
];

function lookup(stops: Stop[], t: number): Stop {
  const clamped = Math.min(Math.max(t, 0), 1);
  const scaled = clamped * (stops.length - 1);
  const i = Math.min(Math.floor(scaled), stops.length - 2);
  const f = scaled - i;
  const lo = stops[i]!;
  const hi = stops[i + 1]!;
  return [
    Math.round(lo[0] + (hi[0] - lo[0]) * f),
    Math.round(lo[1] + (hi[1] - lo[1]) * f),
    Math.round(lo[2] + (hi[2] - lo[2]) * f),
  ];
}

function previewShape(preview: number[][]): { width: number; height: number } {
  const height = preview.length;
  const width = height > 0 ? preview[0]!.length : 0;
  if (height === 0 || width === 0) {
    throw new Error("empty preview grid");
  }
  for (const row of preview) {
    if (row.length !== width) throw new Error("ragged preview grid");
  }
  return { width, height };
}

/** Map an 8-bit preview grid to a colormapped RGBA image. */
export function renderPreview(preview: number[][]): RenderedImage {
  const { width, height } = previewShape(preview);
  const pixels = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y++) {
    const row = preview[y]!;
    for (let x = 0; x < width; x++) {
      const [r, g, b] = lookup(DEPTH_STOPS, row[x]! / 255);
      const o = (y * width + x) * 4;
      pixels[o] = r;
      pixels[o + 1] = g;
      pixels[o + 2] = b;
      pixels[o + 3] = 255;
    }
  }
  return { width, height, pixels };
}

/** Composite the variance preview over a rendered mode as a heat layer;
 * opacity grows with ambiguity so certain regions stay readable. */
export function overlayVariance(
  base: RenderedImage,
  variancePreview: number[][],
  maxOpacity = 0.75,
): RenderedImage {
  const { width, height } = previewShape(variancePreview);
  if (width !== base.width || height !== base.height) {
    throw new Error(
      `variance preview ${width}x${height} does not match image ` +
        `${base.width}x${base.height}`,
    );
  }
  const pixels = new Uint8ClampedArray(base.pixels);
  for (let y = 0; y < height; y++) {
    const row = variancePreview[y]!;
    for (let x = 0; x < width; x++) {
      const t = row[x]! / 255;
      const [r, g, b] = lookup(HEAT_STOPS, t);
      const a = t * maxOpacity;
      const o = (y * width + x) * 4;
      pixels[o] = Math.round(pixels[o]! * (1 - a) + r * a);
      pixels[o + 1] = Math.round(pixels[o + 1]! * (1 - a) + g * a);
      pixels[o + 2] = Math.round(pixels[o + 2]! * (1 - a) + b * a);
    }
  }
  return { width: base.width, height: base.height, pixels };
}
