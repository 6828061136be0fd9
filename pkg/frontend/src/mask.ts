/** In-browser label grid: what the expert paints before submission.
 *
 * The grid is the exact payload later posted to the server — rendering may
 * zoom it, but nothing ever resamples the labels themselves.
 */

export interface Point {
  x: number;
  y: number;
}

export class CanvasMask {
  readonly width: number;
  readonly height: number;
  readonly nClasses: number;
  activeClass = 1;
  brushRadius = 1;
  private grid: Uint8Array;
  private undoStack: Uint8Array[] = [];

  constructor(width: number, height: number, nClasses: number) {
    if (width < 1 || height < 1) {
      throw new Error(`invalid extents ${width}x${height}`);
    }
    if (nClasses < 2) {
      throw new Error(`need at least 2 classes, got ${nClasses}`);
    }
    this.width = width;
    this.height = height;
    this.nClasses = nClasses;
    this.grid = new Uint8Array(width * height);
  }

  get(x: number, y: number): number {
    return this.grid[y * this.width + x];
  }

  setActiveClass(k: number): void {
    if (!Number.isInteger(k) || k < 0 || k >= this.nClasses) {
      throw new Error(`class ${k} out of range [0, ${this.nClasses})`);
    }
    this.activeClass = k;
  }

  /** Paint every pixel within brushRadius of the path with the active
   * class (class 0 erases to background). One stroke = one undo entry. */
  paintStroke(path: Point[]): void {
    if (path.length === 0) {
      return;
    }
    this.undoStack.push(this.grid.slice());
    const r = this.brushRadius;
    const r2 = r * r;
    for (const p of path) {
      const cx = Math.round(p.x);
      const cy = Math.round(p.y);
      for (let y = Math.max(0, cy - r); y <= Math.min(this.height - 1, cy + r); y++) {
        for (let x = Math.max(0, cx - r); x <= Math.min(this.width - 1, cx + r); x++) {
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2) {
            this.grid[y * this.width + x] = this.activeClass;
          }
        }
      }
    }
  }

  /** Restore the exact grid from before the last stroke. */
  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) {
      return false;
    }
    this.grid = prev;
    return true;
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  /** Row-major 2-D label array: the exact submission payload. */
  toLabels(): number[][] {
    const rows: number[][] = [];
    for (let y = 0; y < this.height; y++) {
      rows.push(Array.from(this.grid.subarray(y * this.width, (y + 1) * this.width)));
    }
    return rows;
  }

  /** Replace the grid (e.g. with a previously stored annotation). */
  loadLabels(labels: number[][]): void {
    if (labels.length !== this.height || labels.some((r) => r.length !== this.width)) {
      throw new Error("label extents do not match the mask");
    }
    for (let y = 0; y < this.height; y++) {
      for (let x = 0; x < this.width; x++) {
        const v = labels[y][x];
        if (!Number.isInteger(v) || v < 0 || v >= this.nClasses) {
          throw new Error(`label ${v} out of range at (${x}, ${y})`);
        }
      }
    }
    this.undoStack.push(this.grid.slice());
    for (let y = 0; y < this.height; y++) {
      for (let x = 0; x < this.width; x++) {
        this.grid[y * this.width + x] = labels[y][x];
      }
    }
  }
}
