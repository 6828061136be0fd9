import { describe, expect, it } from "vitest";

import { CanvasMask } from "../src/mask.js";
import { canvasToGrid, classColor, rasterizeMask } from "../src/render.js";

describe("rasterizeMask", () => {
  it("expands each grid cell to an exact zoom x zoom block", () => {
    const mask = new CanvasMask(2, 2, 3);
    mask.setActiveClass(1);
    mask.brushRadius = 0;
    mask.paintStroke([{ x: 1, y: 0 }]);
    const zoom = 3;
    const out = new Uint8ClampedArray(2 * zoom * 2 * zoom * 4);
    rasterizeMask(mask, zoom, out);

    const [r, g, b, a] = classColor(1);
    const W = 2 * zoom;
    for (let y = 0; y < 2 * zoom; y++) {
      for (let x = 0; x < 2 * zoom; x++) {
        const o = (y * W + x) * 4;
        const inBlock = x >= zoom && y < zoom; // cell (1, 0)
        if (inBlock) {
          expect([out[o], out[o + 1], out[o + 2], out[o + 3]]).toEqual([r, g, b, a]);
        } else {
          expect(out[o + 3]).toBe(0); // background stays transparent
        }
      }
    }
  });

  it("rejects non-integer zoom and wrong buffer sizes", () => {
    const mask = new CanvasMask(4, 4, 2);
    expect(() => rasterizeMask(mask, 1.5, new Uint8ClampedArray(0))).toThrow("integer");
    expect(() => rasterizeMask(mask, 2, new Uint8ClampedArray(3))).toThrow("length");
  });
});

describe("canvasToGrid", () => {
  it("inverts the integer zoom exactly", () => {
    expect(canvasToGrid(0, 0, 12)).toEqual({ x: 0, y: 0 });
    expect(canvasToGrid(11, 11, 12)).toEqual({ x: 0, y: 0 });
    expect(canvasToGrid(12, 25, 12)).toEqual({ x: 1, y: 2 });
  });
});
