/** Rectangle handling for the annotation tool.
 *
 * Drags arrive in image pixel coordinates with arbitrary corner order
 * (the user may drag up-left).  Before submission every rectangle is
 * normalized to integer top-left + size and clamped to the image; a drag
 * entirely outside the image (or collapsing to zero area after
 * clamping) yields null and is never sent to the server.
 */

import type { Rect } from "./types.js";

export interface DragRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

const clamp = (v: number, lo: number, hi: number): number =>
  Math.min(Math.max(v, lo), hi);

export function rectFromDrag(
  drag: DragRect,
  mode: number,
  width: number,
  height: number,
): Rect | null {
  const left = clamp(Math.floor(Math.min(drag.x0, drag.x1)), 0, width);
  const right = clamp(Math.ceil(Math.max(drag.x0, drag.x1)), 0, width);
  const top = clamp(Math.floor(Math.min(drag.y0, drag.y1)), 0, height);
  const bottom = clamp(Math.ceil(Math.max(drag.y0, drag.y1)), 0, height);
  const w = right - left;
  const h = bottom - top;
  if (w < 1 || h < 1) return null;
  return { mode, x: left, y: top, w, h };
}

/** True when the rectangle lies fully inside a width x height image. */
export function rectInBounds(
  rect: Rect,
  width: number,
  height: number,
): boolean {
  return (
    rect.w >= 1 &&
    rect.h >= 1 &&
    rect.x >= 0 &&
    rect.y >= 0 &&
    rect.x + rect.w <= width &&
    rect.y + rect.h <= height
  );
}
