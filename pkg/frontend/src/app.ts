// Browser entry point: wires the pair browser, the two preview canvases,
// drag selection, the four-corner chart placement mode, and the commit
// controls to the annotation service.

import { AnnotationClient, type PairDetail } from "./client.js";
import { type Drag, type Patch, type Point } from "./geometry.js";
import {
  clearPending,
  commitEnabled,
  commitRecord,
  createState,
  regionReady,
  removeRegion,
  selectPatch,
  setChartFromCorners,
  submitRegion,
  type MutationResult,
  type SelectionState,
  type Side,
} from "./state.js";

type Mode = "region" | "corners";

interface SideView {
  side: Side;
  canvas: HTMLCanvasElement;
  buffer: HTMLCanvasElement; // native-resolution copy for pixel reads
  image: HTMLImageElement | null;
  corners: Point[];
  dragStart: Point | null;
}

function must<T extends Element>(selector: string): T {
  const el = document.querySelector<T>(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el;
}

class App {
  private client: AnnotationClient;
  private state: SelectionState | null = null;
  private detail: PairDetail | null = null;
  private views: Record<Side, SideView>;
  private mode: Mode = "region";
  private zoom = 1;

  private pairSelect = must<HTMLSelectElement>("#pair-select");
  private zoomSelect = must<HTMLSelectElement>("#zoom-select");
  private modeButton = must<HTMLButtonElement>("#mode-button");
  private submitButton = must<HTMLButtonElement>("#submit-button");
  private commitButton = must<HTMLButtonElement>("#commit-button");
  private statusLine = must<HTMLElement>("#status-line");
  private errorLine = must<HTMLElement>("#error-line");
  private residualLine = must<HTMLElement>("#residual-line");
  private warningBadge = must<HTMLElement>("#warning-badge");
  private regionList = must<HTMLElement>("#region-list");

  constructor(baseUrl: string) {
    this.client = new AnnotationClient(baseUrl);
    this.views = {
      a: this.makeView("a", must<HTMLCanvasElement>("#canvas-a")),
      b: this.makeView("b", must<HTMLCanvasElement>("#canvas-b")),
    };
    this.pairSelect.addEventListener("change", () => {
      void this.loadPair(this.pairSelect.value);
    });
    this.zoomSelect.addEventListener("change", () => {
      this.zoom = Number(this.zoomSelect.value);
      this.renderAll();
    });
    this.modeButton.addEventListener("click", () => this.toggleMode());
    this.submitButton.addEventListener("click", () => {
      void this.onSubmit();
    });
    this.commitButton.addEventListener("click", () => {
      void this.onCommit();
    });
  }

  private makeView(side: Side, canvas: HTMLCanvasElement): SideView {
    const view: SideView = {
      side,
      canvas,
      buffer: document.createElement("canvas"),
      image: null,
      corners: [],
      dragStart: null,
    };
    canvas.addEventListener("mousedown", (ev) => this.onDown(view, ev));
    canvas.addEventListener("mouseup", (ev) => {
      void this.onUp(view, ev);
    });
    return view;
  }

  async start(): Promise<void> {
    const pairs = await this.client.listPairs();
    for (const pair of pairs) {
      const opt = document.createElement("option");
      opt.value = pair.pair_id;
      opt.textContent = `${pair.pair_id} (${pair.split})`;
      this.pairSelect.appendChild(opt);
    }
    if (pairs.length > 0) await this.loadPair(pairs[0].pair_id);
  }

  private async loadPair(pairId: string): Promise<void> {
    const detail = await this.client.pairDetail(pairId);
    this.detail = detail;
    const imgA = await this.loadImage(detail.annotate_a);
    const imgB = await this.loadImage(detail.annotate_b);
    this.views.a.image = imgA;
    this.views.b.image = imgB;
    this.views.a.corners = [];
    this.views.b.corners = [];
    for (const side of ["a", "b"] as const) {
      const view = this.views[side];
      const img = view.image as HTMLImageElement;
      view.buffer.width = img.naturalWidth;
      view.buffer.height = img.naturalHeight;
      const ctx = view.buffer.getContext("2d") as CanvasRenderingContext2D;
      ctx.drawImage(img, 0, 0);
    }
    this.state = createState(
      detail,
      { width: imgA.naturalWidth, height: imgA.naturalHeight },
      { width: imgB.naturalWidth, height: imgB.naturalHeight },
    );
    this.renderAll();
  }

  private loadImage(imageId: string): Promise<HTMLImageElement> {
    return new Promise((resolve, reject) => {
      const img = new Image();
      img.onload = () => resolve(img);
      img.onerror = () => reject(new Error(`preview failed for ${imageId}`));
      img.src = this.client.previewUrl(imageId);
    });
  }

  private toggleMode(): void {
    this.mode = this.mode === "region" ? "corners" : "region";
    this.views.a.corners = [];
    this.views.b.corners = [];
    if (this.state) clearPending(this.state);
    this.renderAll();
  }

  private displayPoint(view: SideView, ev: MouseEvent): Point {
    const rect = view.canvas.getBoundingClientRect();
    return [ev.clientX - rect.left, ev.clientY - rect.top];
  }

  private onDown(view: SideView, ev: MouseEvent): void {
    if (this.mode === "region") view.dragStart = this.displayPoint(view, ev);
  }

  private async onUp(view: SideView, ev: MouseEvent): Promise<void> {
    if (!this.state) return;
    const [x, y] = this.displayPoint(view, ev);
    if (this.mode === "corners") {
      // clicks mark the centers of the four corner chart patches
      view.corners.push([x / this.zoom, y / this.zoom]);
      if (this.views.a.corners.length === 4 && this.views.b.corners.length === 4) {
        this.report(
          await setChartFromCorners(
            this.state,
            this.client,
            this.views.a.corners,
            this.views.b.corners,
          ),
        );
        this.mode = "region";
        this.views.a.corners = [];
        this.views.b.corners = [];
      }
      this.renderAll();
      return;
    }
    if (!view.dragStart) return;
    const drag: Drag = {
      startX: view.dragStart[0],
      startY: view.dragStart[1],
      endX: x,
      endY: y,
    };
    view.dragStart = null;
    try {
      selectPatch(this.state, view.side, drag, this.zoom);
      this.showError("");
    } catch (err) {
      this.showError(err instanceof Error ? err.message : String(err));
    }
    this.renderAll();
  }

  private pixelsFor(view: SideView) {
    const ctx = view.buffer.getContext("2d") as CanvasRenderingContext2D;
    const data = ctx.getImageData(0, 0, view.buffer.width, view.buffer.height);
    return { pixels: data.data, width: view.buffer.width };
  }

  private async onSubmit(): Promise<void> {
    if (!this.state || !regionReady(this.state)) return;
    this.report(
      await submitRegion(
        this.state,
        this.client,
        this.pixelsFor(this.views.a),
        this.pixelsFor(this.views.b),
      ),
    );
    this.renderAll();
  }

  private async onCommit(): Promise<void> {
    if (!this.state) return;
    this.report(await commitRecord(this.state, this.client));
    this.renderAll();
  }

  private async onRemove(index: number): Promise<void> {
    if (!this.state) return;
    this.report(await removeRegion(this.state, this.client, index));
    this.renderAll();
  }

  private report(result: MutationResult): void {
    this.showError(result.ok ? "" : result.error ?? "request failed");
  }

  private showError(message: string): void {
    this.errorLine.textContent = message;
    this.errorLine.hidden = message === "";
  }

  private drawPatch(
    ctx: CanvasRenderingContext2D,
    patch: Patch,
    color: string,
  ): void {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1;
    ctx.strokeRect(
      patch.x * this.zoom + 0.5,
      patch.y * this.zoom + 0.5,
      patch.size * this.zoom,
      patch.size * this.zoom,
    );
  }

  private renderSide(view: SideView): void {
    const img = view.image;
    if (!img || !this.state) return;
    const { canvas } = view;
    canvas.width = Math.round(img.naturalWidth * this.zoom);
    canvas.height = Math.round(img.naturalHeight * this.zoom);
    const ctx = canvas.getContext("2d") as CanvasRenderingContext2D;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    const chart = view.side === "a" ? this.state.chartA : this.state.chartB;
    for (const patch of chart) this.drawPatch(ctx, patch, "#3c3");
    for (const region of this.state.regions) {
      const patch = view.side === "a" ? region.patch_a : region.patch_b;
      this.drawPatch(ctx, patch, "#39f");
    }
    const pending =
      view.side === "a" ? this.state.pendingA : this.state.pendingB;
    if (pending) this.drawPatch(ctx, pending, "#fc0");
    ctx.fillStyle = "#f33";
    for (const [cx, cy] of view.corners) {
      ctx.fillRect(cx * this.zoom - 2, cy * this.zoom - 2, 4, 4);
    }
  }

  private renderAll(): void {
    this.renderSide(this.views.a);
    this.renderSide(this.views.b);
    const state = this.state;
    if (!state) return;
    this.modeButton.textContent =
      this.mode === "region" ? "place chart corners" : "back to region mode";
    this.submitButton.disabled = !regionReady(state);
    this.commitButton.disabled = !commitEnabled(state);
    this.statusLine.textContent =
      `${state.pairId}: ${state.nSamples} samples, status ${state.status}`;
    this.residualLine.textContent = state.lastFit
      ? `fit residual ${state.lastFit.residual_rms.toFixed(5)} over ` +
        `${state.lastFit.n_samples} samples`
      : "no fit yet";
    this.warningBadge.hidden = !state.residualIncreased;
    this.regionList.replaceChildren();
    state.regions.forEach((region, index) => {
      const row = document.createElement("li");
      row.textContent =
        `a(${region.patch_a.x},${region.patch_a.y},${region.patch_a.size}) ` +
        `b(${region.patch_b.x},${region.patch_b.y},${region.patch_b.size})`;
      const drop = document.createElement("button");
      drop.textContent = "remove";
      drop.addEventListener("click", () => {
        void this.onRemove(index);
      });
      row.appendChild(drop);
      this.regionList.appendChild(row);
    });
  }
}

export function boot(baseUrl?: string): void {
  const app = new App(baseUrl ?? window.location.origin);
  void app.start();
}

if (typeof document !== "undefined" && document.querySelector("#pair-select")) {
  boot();
}
