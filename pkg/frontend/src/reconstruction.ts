/** Reconstruction screen: orbitable point cloud with camera frusta, plus
 * perspective panorama viewers (gnomonic) opened per camera. Selecting a 3D
 * point highlights its observations in every open panorama. */

import { ApiError, Client } from "./api.js";
import {
  OrbitState,
  SceneModel,
  ScenePoint,
  buildScene,
  fitOrbit,
  frustumSegments,
  orbitProject,
  pickPoint,
} from "./scene.js";
import {
  RasterLike,
  ViewState,
  clampView,
  dragLook,
  renderGnomonic,
} from "./gnomonic.js";

interface PanoViewer {
  imageId: string;
  canvas: HTMLCanvasElement;
  view: ViewState;
  source: RasterLike;
  highlight: [number, number] | null;
}

export class ReconstructionView {
  private model: SceneModel = { frusta: [], points: [] };
  private orbit: OrbitState = fitOrbit({ frusta: [], points: [] });
  private canvas!: HTMLCanvasElement;
  private viewers: PanoViewer[] = [];
  private selected: ScenePoint | null = null;
  private syncLook = false;
  private dragging = false;
  private last = { x: 0, y: 0 };

  constructor(
    private client: Client,
    private root: HTMLElement,
    private status: (msg: string) => void,
  ) {
    this.root.innerHTML = `
      <div class="toolbar">
        <button id="run-register">Register</button>
        <button id="run-triangulate">Triangulate</button>
        <button id="reload-cloud">Reload</button>
        <label><input type="checkbox" id="sync-look"> sync look direction</label>
        <span id="scene-info"></span>
      </div>
      <div class="pane-row">
        <div class="pane"><canvas id="scene-canvas" width="760" height="520"></canvas></div>
        <div class="pane" id="pano-stack"></div>
      </div>
      <div id="empty-state"></div>
    `;
    this.canvas = this.root.querySelector("#scene-canvas") as HTMLCanvasElement;
    (this.root.querySelector("#run-register") as HTMLButtonElement).onclick = () =>
      void this.run(() => this.client.register(), "registered");
    (this.root.querySelector("#run-triangulate") as HTMLButtonElement).onclick = () =>
      void this.run(() => this.client.triangulate(), "triangulated");
    (this.root.querySelector("#reload-cloud") as HTMLButtonElement).onclick = () =>
      void this.reload();
    (this.root.querySelector("#sync-look") as HTMLInputElement).onchange = (e) => {
      this.syncLook = (e.target as HTMLInputElement).checked;
    };

    this.canvas.addEventListener("mousedown", (e) => {
      this.dragging = true;
      this.last = { x: e.offsetX, y: e.offsetY };
    });
    window.addEventListener("mouseup", () => (this.dragging = false));
    this.canvas.addEventListener("mousemove", (e) => {
      if (!this.dragging) return;
      this.orbit = {
        ...this.orbit,
        yaw: this.orbit.yaw - (e.offsetX - this.last.x) * 0.01,
        pitch: Math.max(
          -1.45,
          Math.min(1.45, this.orbit.pitch + (e.offsetY - this.last.y) * 0.01),
        ),
      };
      this.last = { x: e.offsetX, y: e.offsetY };
      this.drawScene();
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.orbit = {
        ...this.orbit,
        distance: this.orbit.distance * (e.deltaY > 0 ? 1.15 : 1 / 1.15),
      };
      this.drawScene();
    });
    this.canvas.addEventListener("click", (e) => void this.handlePick(e));
  }

  async init(): Promise<void> {
    await this.reload();
  }

  private async run(step: () => Promise<unknown>, label: string): Promise<void> {
    try {
      await step();
      this.status(label);
      await this.reload();
    } catch (err) {
      this.surface(err);
    }
  }

  private async reload(): Promise<void> {
    try {
      const cloud = await this.client.pointcloud();
      this.model = buildScene(cloud);
      this.orbit = fitOrbit(this.model);
      (this.root.querySelector("#empty-state") as HTMLElement).textContent = "";
      (this.root.querySelector("#scene-info") as HTMLElement).textContent =
        `${this.model.frusta.length} cameras, ${this.model.points.length} points`;
      this.drawScene();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.model = { frusta: [], points: [] };
        (this.root.querySelector("#empty-state") as HTMLElement).textContent =
          "No reconstruction yet: annotate pairs, then Register and Triangulate.";
        this.drawScene();
        return;
      }
      this.surface(err);
    }
  }

  private drawScene(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width: w, height: h } = this.canvas;
    ctx.fillStyle = "#101216";
    ctx.fillRect(0, 0, w, h);

    for (const point of this.model.points) {
      const proj = orbitProject(this.orbit, point.p, w, h);
      if (!proj) continue;
      const r = point === this.selected ? 4 : 2;
      ctx.fillStyle =
        point === this.selected
          ? "#ff53d8"
          : `rgb(${point.color[0]},${point.color[1]},${point.color[2]})`;
      ctx.fillRect(proj[0] - r / 2, proj[1] - r / 2, r, r);
    }

    const scale = this.orbit.distance * 0.05;
    ctx.strokeStyle = "#69b7ff";
    ctx.lineWidth = 1.2;
    ctx.font = "12px sans-serif";
    ctx.fillStyle = "#69b7ff";
    for (const frustum of this.model.frusta) {
      for (const [p, q] of frustumSegments(frustum, scale)) {
        const a = orbitProject(this.orbit, p, w, h);
        const b = orbitProject(this.orbit, q, w, h);
        if (!a || !b) continue;
        ctx.beginPath();
        ctx.moveTo(a[0], a[1]);
        ctx.lineTo(b[0], b[1]);
        ctx.stroke();
      }
      const c = orbitProject(this.orbit, frustum.center, w, h);
      if (c) ctx.fillText(frustum.imageId, c[0] + 6, c[1] - 6);
    }
  }

  private async handlePick(e: MouseEvent): Promise<void> {
    const { width: w, height: h } = this.canvas;
    const point = pickPoint(this.model, this.orbit, e.offsetX, e.offsetY, w, h);
    if (point) {
      this.selected = point;
      this.status(
        `point ${point.id}: observed in ${Object.keys(point.observations).join(", ")}`,
      );
      this.drawScene();
      this.refreshHighlights();
      return;
    }
    // No point: try a camera marker, which opens its panorama viewer.
    for (const frustum of this.model.frusta) {
      const c = orbitProject(this.orbit, frustum.center, w, h);
      if (c && Math.hypot(c[0] - e.offsetX, c[1] - e.offsetY) < 12) {
        await this.openViewer(frustum.imageId);
        return;
      }
    }
  }

  private async openViewer(imageId: string): Promise<void> {
    if (this.viewers.some((v) => v.imageId === imageId)) return;
    try {
      const bitmap = await loadRaster(this.client.imageUrl(imageId));
      const canvas = document.createElement("canvas");
      canvas.width = 380;
      canvas.height = 260;
      canvas.className = "pano-viewer";
      const stack = this.root.querySelector("#pano-stack") as HTMLElement;
      const title = document.createElement("h3");
      title.textContent = `${imageId} (drag to look)`;
      stack.appendChild(title);
      stack.appendChild(canvas);
      const viewer: PanoViewer = {
        imageId,
        canvas,
        view: clampView({ yaw: 0, pitch: 0, fov: (75 * Math.PI) / 180 }),
        source: bitmap,
        highlight: null,
      };
      this.viewers.push(viewer);
      let dragging = false;
      let last = { x: 0, y: 0 };
      canvas.addEventListener("mousedown", (e) => {
        dragging = true;
        last = { x: e.offsetX, y: e.offsetY };
      });
      window.addEventListener("mouseup", () => (dragging = false));
      canvas.addEventListener("mousemove", (e) => {
        if (!dragging) return;
        const next = dragLook(
          viewer.view, e.offsetX - last.x, e.offsetY - last.y,
          canvas.width, canvas.height,
        );
        last = { x: e.offsetX, y: e.offsetY };
        if (this.syncLook) {
          for (const v of this.viewers) v.view = next;
          this.drawAllViewers();
        } else {
          viewer.view = next;
          this.drawViewer(viewer);
        }
      });
      canvas.addEventListener("wheel", (e) => {
        e.preventDefault();
        viewer.view = clampView({
          ...viewer.view,
          fov: viewer.view.fov * (e.deltaY > 0 ? 1.1 : 1 / 1.1),
        });
        this.drawViewer(viewer);
      });
      this.refreshHighlights();
      this.drawViewer(viewer);
    } catch (err) {
      this.surface(err);
    }
  }

  private refreshHighlights(): void {
    for (const viewer of this.viewers) {
      const obs = this.selected?.observations[viewer.imageId];
      viewer.highlight = obs ? [obs[0], obs[1]] : null;
    }
    this.drawAllViewers();
  }

  private drawAllViewers(): void {
    for (const viewer of this.viewers) this.drawViewer(viewer);
  }

  private drawViewer(viewer: PanoViewer): void {
    const ctx = viewer.canvas.getContext("2d");
    if (!ctx) return;
    const out = ctx.createImageData(viewer.canvas.width, viewer.canvas.height);
    renderGnomonic(viewer.source, viewer.view, out);
    ctx.putImageData(out, 0, 0);
    if (viewer.highlight) {
      // Highlight the observation if it falls inside the current view.
      const [hx, hy] = viewer.highlight;
      const marker = projectIntoView(viewer, hx, hy);
      if (marker) {
        ctx.strokeStyle = "#ff53d8";
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(marker[0], marker[1], 8, 0, 2 * Math.PI);
        ctx.stroke();
      }
    }
  }

  private surface(err: unknown): void {
    if (err instanceof ApiError) this.status(`${err.category}: ${err.message}`);
    else this.status(String(err));
  }
}

/** Forward-project an equirect pixel into a viewer's current perspective. */
function projectIntoView(viewer: PanoViewer, px: number, py: number): [number, number] | null {
  const { pixelToBearing, viewBasis, dot3 } = gnomonicHelpers;
  const b = pixelToBearing(px, py, viewer.source.width, viewer.source.height);
  const { forward, right, up } = viewBasis(viewer.view);
  const z = dot3(b, forward);
  if (z <= 1e-9) return null;
  const t = Math.tan(viewer.view.fov / 2);
  const x = dot3(b, right) / z;
  const y = dot3(b, up) / z;
  const w = viewer.canvas.width;
  const h = viewer.canvas.height;
  const u = ((x / (t * (w / h)) + 1) * w) / 2;
  const v = ((-y / t + 1) * h) / 2;
  if (u < 0 || u >= w || v < 0 || v >= h) return null;
  return [u, v];
}

import * as gnomonicHelpers from "./gnomonic.js";

async function loadRaster(url: string): Promise<RasterLike> {
  const img = new Image();
  img.src = url;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d context unavailable");
  ctx.drawImage(img, 0, 0);
  const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
  return { width: data.width, height: data.height, data: data.data };
}
