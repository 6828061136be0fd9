/** Integer-zoom rendering of the label grid: every mask pixel becomes a
 * zoom x zoom block, so nothing is ever interpolated. */

import type { CanvasMask } from "./mask.js";

/** Class colors as RGBA; class 0 (background) is transparent so the
 * grayscale image shows through the overlay. */
export const CLASS_COLORS: [number, number, number, number][] = [
  [0, 0, 0, 0],
  [230, 60, 60, 160],
  [60, 130, 230, 160],
  [60, 200, 90, 160],
  [230, 180, 40, 160],
  [180, 80, 220, 160],
];

export function classColor(k: number): [number, number, number, number] {
  return CLASS_COLORS[k % CLASS_COLORS.length];
}

/** Fill an RGBA byte buffer (length W*zoom * H*zoom * 4) from the mask. */
export function rasterizeMask(mask: CanvasMask, zoom: number, out: Uint8ClampedArray): void {
  if (!Number.isInteger(zoom) || zoom < 1) {
    throw new Error(`zoom must be a positive integer, got ${zoom}`);
  }
  const W = mask.width * zoom;
  if (out.length !== W * mask.height * zoom * 4) {
    throw new Error("output buffer has wrong length");
  }
  for (let y = 0; y < mask.height; y++) {
    for (let x = 0; x < mask.width; x++) {
      const [r, g, b, a] = classColor(mask.get(x, y));
      for (let dy = 0; dy < zoom; dy++) {
        const rowBase = ((y * zoom + dy) * W + x * zoom) * 4;
        for (let dx = 0; dx < zoom; dx++) {
          const o = rowBase + dx * 4;
          out[o] = r;
          out[o + 1] = g;
          out[o + 2] = b;
          out[o + 3] = a;
        }
      }
    }
  }
}

/** Map a canvas-space coordinate back to a grid cell. */
export function canvasToGrid(
  px: number,
  py: number,
  zoom: number,
): { x: number; y: number } {
  return { x: Math.floor(px / zoom), y: Math.floor(py / zoom) };
}
