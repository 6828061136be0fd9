/** Single-page annotation tool: worklist of suggested samples, a brush
 * canvas per sample, submission, and live loop status. */

import { ApiClient, ApiError } from "./api.js";
import { CanvasMask } from "./mask.js";
import { SessionPoller } from "./poll.js";
import { canvasToGrid, classColor, rasterizeMask } from "./render.js";
import type { DatasetInfo, SessionInfo, SuggestionInfo } from "./types.js";

const ZOOM = 12;

interface Card {
  id: number;
  mask: CanvasMask;
  canvas: HTMLCanvasElement;
  status: HTMLElement;
  done: boolean;
}

class App {
  private readonly api = new ApiClient();
  private dataset!: DatasetInfo;
  private cards = new Map<number, Card>();
  private renderedIteration = -1;
  private painting = false;
  private activeCard: Card | null = null;
  private currentStroke: { x: number; y: number }[] = [];

  private readonly worklist = document.getElementById("worklist")!;
  private readonly banner = document.getElementById("banner")!;
  private readonly status = document.getElementById("status")!;
  private readonly legend = document.getElementById("legend")!;

  async start(): Promise<void> {
    this.dataset = await this.api.getDataset();
    this.buildLegend();
    document.addEventListener("keydown", (e) => this.onKey(e));
    document.addEventListener("mouseup", () => (this.painting = false));
    const poller = new SessionPoller(
      () => this.api.getSession(),
      {
        onSession: (info) => void this.onSession(info),
        onNetworkError: (msg) => this.showBanner(msg),
      },
    );
    poller.start();
  }

  private buildLegend(): void {
    for (let k = 0; k < this.dataset.n_classes; k++) {
      const chip = document.createElement("span");
      chip.className = "chip";
      const [r, g, b] = classColor(k);
      chip.style.background = k === 0 ? "#222" : `rgb(${r},${g},${b})`;
      chip.textContent = k === 0 ? `${k} erase` : `${k}`;
      chip.title = `press ${k} to select`;
      this.legend.appendChild(chip);
    }
  }

  private showBanner(message: string | null): void {
    this.banner.textContent = message ?? "";
    this.banner.style.display = message === null ? "none" : "block";
  }

  private async onSession(info: SessionInfo): Promise<void> {
    this.status.textContent =
      `iteration ${info.iteration} — ${info.labeled_count} labeled — phase: ${info.phase}`;
    if (info.phase === "training") {
      this.worklist.classList.add("busy");
      if (this.allDone()) {
        this.status.textContent += " (iteration advancing…)";
      }
      return;
    }
    this.worklist.classList.remove("busy");
    if (info.phase !== "awaiting") {
      this.worklist.textContent = `session ${info.phase}`;
      return;
    }
    if (info.iteration !== this.renderedIteration) {
      this.renderedIteration = info.iteration;
      const suggestions = await this.api.getSuggestions();
      this.buildWorklist(suggestions);
    }
  }

  private allDone(): boolean {
    return this.cards.size > 0 && [...this.cards.values()].every((c) => c.done);
  }

  private buildWorklist(suggestions: SuggestionInfo[]): void {
    this.worklist.textContent = "";
    this.cards.clear();
    for (const s of suggestions) {
      this.worklist.appendChild(this.buildCard(s));
    }
  }

  private buildCard(s: SuggestionInfo): HTMLElement {
    const { height, width, n_classes } = this.dataset;
    const card = document.createElement("div");
    card.className = "card";

    const title = document.createElement("h3");
    title.textContent = `sample ${s.id}`;
    if (s.fallback) {
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = "fallback";
      badge.title = "no candidate satisfied the angular condition";
      title.appendChild(badge);
    }
    card.appendChild(title);

    const stack = document.createElement("div");
    stack.className = "stack";
    stack.style.width = `${width * ZOOM}px`;
    stack.style.height = `${height * ZOOM}px`;
    const img = document.createElement("img");
    img.src = this.api.imageUrl(s.id);
    img.width = width * ZOOM;
    img.height = height * ZOOM;
    const canvas = document.createElement("canvas");
    canvas.width = width * ZOOM;
    canvas.height = height * ZOOM;
    stack.appendChild(img);
    stack.appendChild(canvas);
    card.appendChild(stack);

    const status = document.createElement("p");
    status.className = "card-status";
    status.textContent = s.cosine === null ? "" : `cos ${s.cosine.toFixed(3)}`;
    card.appendChild(status);

    const entry: Card = {
      id: s.id,
      mask: new CanvasMask(width, height, n_classes),
      canvas,
      status,
      done: false,
    };
    this.cards.set(s.id, entry);

    canvas.addEventListener("mousedown", (e) => {
      this.painting = true;
      this.activeCard = entry;
      this.paintAt(entry, e);
    });
    canvas.addEventListener("mousemove", (e) => {
      if (this.painting && this.activeCard === entry) {
        this.paintAt(entry, e, true);
      }
    });

    const controls = document.createElement("div");
    const undoBtn = document.createElement("button");
    undoBtn.textContent = "undo";
    undoBtn.addEventListener("click", () => {
      entry.mask.undo();
      this.redraw(entry);
    });
    const submitBtn = document.createElement("button");
    submitBtn.textContent = "submit";
    submitBtn.addEventListener("click", () => void this.submit(entry));
    controls.appendChild(undoBtn);
    controls.appendChild(submitBtn);
    card.appendChild(controls);
    return card;
  }

  private paintAt(card: Card, e: MouseEvent, extendStroke = false): void {
    const rect = card.canvas.getBoundingClientRect();
    const p = canvasToGrid(e.clientX - rect.left, e.clientY - rect.top, ZOOM);
    if (extendStroke) {
      // mid-stroke: replace the in-progress stroke so the whole drag
      // stays a single undo entry
      this.currentStroke.push(p);
      card.mask.undo();
    } else {
      this.currentStroke = [p];
    }
    card.mask.paintStroke(this.currentStroke);
    this.redraw(card);
  }

  private redraw(card: Card): void {
    const ctx = card.canvas.getContext("2d")!;
    const image = ctx.createImageData(card.canvas.width, card.canvas.height);
    rasterizeMask(card.mask, ZOOM, image.data);
    ctx.putImageData(image, 0, 0);
  }

  private async submit(card: Card): Promise<void> {
    // the payload is the painted grid, bit-identical — no resampling
    const labels = card.mask.toLabels();
    try {
      await this.api.submitAnnotation(card.id, labels);
    } catch (err) {
      // surface the server's message verbatim; keep the canvas as-is
      const detail =
        err instanceof ApiError
          ? err.status === 409
            ? `conflict: ${err.message}`
            : err.message
          : String(err);
      card.status.textContent = detail;
      return;
    }
    card.done = true;
    card.status.textContent = "submitted";
  }

  private onKey(e: KeyboardEvent): void {
    const k = parseInt(e.key, 10);
    if (Number.isInteger(k) && k >= 0 && k < this.dataset.n_classes) {
      for (const card of this.cards.values()) {
        card.mask.setActiveClass(k);
      }
      this.status.textContent = `active class: ${k}`;
    } else if (e.key === "z" && (e.ctrlKey || e.metaKey) && this.activeCard) {
      this.activeCard.mask.undo();
      this.redraw(this.activeCard);
    }
  }
}

void new App().start();
