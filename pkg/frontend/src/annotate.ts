/** Annotation screen: side-by-side panoramas, click-click commit with live
 * epipolar guidance after a solve. Errors from the API surface in the
 * status bar; nothing is dropped silently. */

import { ApiError, Client } from "./api.js";
import { AnnotationSession } from "./session.js";
import { Marker, PanoramaPane } from "./panes.js";

export class AnnotateView {
  private session: AnnotationSession;
  private left: PanoramaPane;
  private right: PanoramaPane;
  private hoverTimer: number | null = null;

  constructor(
    private client: Client,
    private root: HTMLElement,
    private status: (msg: string) => void,
  ) {
    this.session = new AnnotationSession(client);
    this.root.innerHTML = `
      <div class="toolbar">
        <select id="pair-select"></select>
        <button id="solve-manual">Solve (manual)</button>
        <button id="solve-ransac">Solve (RANSAC)</button>
        <button id="undo-pending">Discard pending</button>
        <span id="pair-info"></span>
      </div>
      <div class="pane-row">
        <div class="pane"><h3 id="left-title"></h3><canvas id="left-canvas" width="640" height="400"></canvas></div>
        <div class="pane"><h3 id="right-title"></h3><canvas id="right-canvas" width="640" height="400"></canvas></div>
      </div>
      <div id="corr-list" class="corr-list"></div>
    `;
    this.left = new PanoramaPane(this.el<HTMLCanvasElement>("left-canvas"));
    this.right = new PanoramaPane(this.el<HTMLCanvasElement>("right-canvas"));

    this.left.onClick = (x, y) => void this.handleClick("left", x, y);
    this.right.onClick = (x, y) => void this.handleClick("right", x, y);
    this.left.onHover = (x, y) => this.scheduleOverlay(x, y);

    this.el<HTMLButtonElement>("solve-manual").onclick = () => void this.solve("manual");
    this.el<HTMLButtonElement>("solve-ransac").onclick = () => void this.solve("ransac");
    this.el<HTMLButtonElement>("undo-pending").onclick = () => {
      this.session.discardPending();
      this.refreshMarkers();
    };
    this.el<HTMLSelectElement>("pair-select").onchange = () => void this.loadSelectedPair();
  }

  private el<T extends HTMLElement>(id: string): T {
    return this.root.querySelector(`#${id}`) as T;
  }

  async init(): Promise<void> {
    const project = await this.client.project();
    const select = this.el<HTMLSelectElement>("pair-select");
    select.innerHTML = "";
    const ids = project.images.map((im) => im.id);
    for (let i = 0; i < ids.length; i++) {
      for (let j = i + 1; j < ids.length; j++) {
        const option = document.createElement("option");
        option.value = `${ids[i]}|${ids[j]}`;
        option.textContent = `${ids[i]} / ${ids[j]}`;
        select.appendChild(option);
      }
    }
    if (select.options.length > 0) await this.loadSelectedPair();
    else this.status("add at least two images to annotate");
  }

  private async loadSelectedPair(): Promise<void> {
    const [a, b] = this.el<HTMLSelectElement>("pair-select").value.split("|");
    try {
      await this.session.setPair(a, b);
      this.el("left-title").textContent = a;
      this.el("right-title").textContent = b;
      await this.left.load(this.client.imageUrl(a));
      await this.right.load(this.client.imageUrl(b));
      this.right.setOverlay([]);
      this.refreshMarkers();
      this.status(
        this.session.solution
          ? `pair ${a}/${b}: solved (${this.session.solution.method})`
          : `pair ${a}/${b}: ${this.session.correspondences.length} correspondences, unsolved`,
      );
    } catch (err) {
      this.surface(err);
    }
  }

  private async handleClick(side: "left" | "right", x: number, y: number): Promise<void> {
    try {
      const committed = await this.session.click(side, x, y);
      if (committed) this.status(`committed correspondence #${committed.id}`);
      this.refreshMarkers();
    } catch (err) {
      this.surface(err);
    }
  }

  private async solve(method: string): Promise<void> {
    try {
      const sol = await this.session.solve(method);
      this.status(`solved via ${sol.method}: ${sol.inlier_ids.length} inliers`);
      this.refreshMarkers();
    } catch (err) {
      this.surface(err);
    }
  }

  /** Debounced epipolar-overlay fetch for hovers on the left image. */
  private scheduleOverlay(x: number, y: number): void {
    if (this.hoverTimer !== null) window.clearTimeout(this.hoverTimer);
    this.hoverTimer = window.setTimeout(() => {
      void (async () => {
        const result = await this.session.overlayFor(x, y).catch((err) => {
          this.surface(err);
          return null;
        });
        if (!result) return;
        if (result.curve) this.right.setOverlay(result.curve.segments);
        else if (result.reason) {
          this.right.setOverlay([]);
          this.status(result.reason);
        }
      })();
    }, 60);
  }

  private refreshMarkers(): void {
    const leftMarkers: Marker[] = [];
    const rightMarkers: Marker[] = [];
    for (const c of this.session.correspondences) {
      const badge = this.session.inlierBadge(c.id);
      const kind = badge === null ? "committed" : badge ? "inlier" : "outlier";
      leftMarkers.push({ x: c.xa, y: c.ya, label: `${c.id}`, kind });
      rightMarkers.push({ x: c.xb, y: c.yb, label: `${c.id}`, kind });
    }
    const pending = this.session.pending;
    if (pending) {
      const marker: Marker = { x: pending.x, y: pending.y, label: "?", kind: "pending" };
      (pending.side === "left" ? leftMarkers : rightMarkers).push(marker);
    }
    this.left.setMarkers(leftMarkers);
    this.right.setMarkers(rightMarkers);
    this.renderList();
  }

  private renderList(): void {
    const list = this.el("corr-list");
    list.innerHTML = "";
    for (const c of this.session.correspondences) {
      const row = document.createElement("div");
      row.className = "corr-row";
      const badge = this.session.inlierBadge(c.id);
      const badgeText = badge === null ? "" : badge ? " [inlier]" : " [outlier]";
      row.textContent =
        `#${c.id} ${c.source} (${c.xa.toFixed(2)}, ${c.ya.toFixed(2)}) -> ` +
        `(${c.xb.toFixed(2)}, ${c.yb.toFixed(2)})${badgeText}`;
      const del = document.createElement("button");
      del.textContent = "delete";
      del.onclick = () =>
        void this.session
          .remove(c.id)
          .then(() => this.refreshMarkers())
          .catch((err) => this.surface(err));
      row.appendChild(del);
      list.appendChild(row);
    }
  }

  private surface(err: unknown): void {
    if (err instanceof ApiError) this.status(`${err.category}: ${err.message}`);
    else this.status(String(err));
  }
}
