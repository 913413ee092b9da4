/** A pannable, zoomable panorama pane on a 2D canvas, with marker and
 * polyline overlays in image coordinates and an optional magnifier loupe
 * above 4x zoom. Click coordinates are reported sub-pixel in image space. */

export interface Marker {
  x: number;
  y: number;
  label: string;
  kind: "committed" | "pending" | "inlier" | "outlier" | "highlight";
}

export interface ViewTransform {
  scale: number; // canvas px per image px
  ox: number; // canvas position of image x = 0
  oy: number;
}

const MARKER_COLORS: Record<Marker["kind"], string> = {
  committed: "#4f8ef7",
  pending: "#f7b24f",
  inlier: "#3fd07c",
  outlier: "#f05555",
  highlight: "#ff53d8",
};

export class PanoramaPane {
  private image: HTMLImageElement | null = null;
  private view: ViewTransform = { scale: 1, ox: 0, oy: 0 };
  private markers: Marker[] = [];
  private overlay: number[][][] = [];
  private hover: { x: number; y: number } | null = null;
  private dragging = false;
  private dragMoved = false;
  private last = { x: 0, y: 0 };

  onClick: ((x: number, y: number) => void) | null = null;
  onHover: ((x: number, y: number) => void) | null = null;

  constructor(private canvas: HTMLCanvasElement) {
    canvas.addEventListener("mousedown", (e) => {
      this.dragging = true;
      this.dragMoved = false;
      this.last = { x: e.offsetX, y: e.offsetY };
    });
    canvas.addEventListener("mousemove", (e) => {
      if (this.dragging) {
        const dx = e.offsetX - this.last.x;
        const dy = e.offsetY - this.last.y;
        if (Math.abs(dx) + Math.abs(dy) > 2) this.dragMoved = true;
        this.view.ox += dx;
        this.view.oy += dy;
        this.last = { x: e.offsetX, y: e.offsetY };
        this.draw();
      } else if (this.onHover) {
        const [ix, iy] = this.toImage(e.offsetX, e.offsetY);
        this.hover = { x: e.offsetX, y: e.offsetY };
        this.onHover(ix, iy);
      }
    });
    window.addEventListener("mouseup", (e) => {
      if (!this.dragging) return;
      this.dragging = false;
      if (!this.dragMoved && e.target === canvas && this.onClick) {
        const [ix, iy] = this.toImage(
          e.clientX - canvas.getBoundingClientRect().left,
          e.clientY - canvas.getBoundingClientRect().top,
        );
        this.onClick(ix, iy);
      }
    });
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      const factor = e.deltaY < 0 ? 1.2 : 1 / 1.2;
      const [ix, iy] = this.toImage(e.offsetX, e.offsetY);
      this.view.scale = Math.max(0.05, Math.min(40, this.view.scale * factor));
      // Keep the image point under the cursor fixed.
      this.view.ox = e.offsetX - ix * this.view.scale;
      this.view.oy = e.offsetY - iy * this.view.scale;
      this.draw();
    });
    canvas.addEventListener("mouseleave", () => {
      this.hover = null;
      this.draw();
    });
  }

  async load(url: string): Promise<void> {
    const img = new Image();
    img.src = url;
    await img.decode();
    this.image = img;
    const fit = Math.min(
      this.canvas.width / img.naturalWidth,
      this.canvas.height / img.naturalHeight,
    );
    this.view = {
      scale: fit,
      ox: (this.canvas.width - img.naturalWidth * fit) / 2,
      oy: (this.canvas.height - img.naturalHeight * fit) / 2,
    };
    this.draw();
  }

  setMarkers(markers: Marker[]): void {
    this.markers = markers;
    this.draw();
  }

  setOverlay(segments: number[][][]): void {
    this.overlay = segments;
    this.draw();
  }

  toImage(cx: number, cy: number): [number, number] {
    return [
      (cx - this.view.ox) / this.view.scale,
      (cy - this.view.oy) / this.view.scale,
    ];
  }

  private toCanvas(ix: number, iy: number): [number, number] {
    return [
      ix * this.view.scale + this.view.ox,
      iy * this.view.scale + this.view.oy,
    ];
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.fillStyle = "#14161a";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (!this.image) return;

    ctx.imageSmoothingEnabled = this.view.scale < 4;
    ctx.drawImage(
      this.image,
      this.view.ox,
      this.view.oy,
      this.image.naturalWidth * this.view.scale,
      this.image.naturalHeight * this.view.scale,
    );

    ctx.lineWidth = 1.5;
    ctx.strokeStyle = "#ffd23f";
    for (const segment of this.overlay) {
      if (segment.length < 2) continue;
      ctx.beginPath();
      const [sx, sy] = this.toCanvas(segment[0][0], segment[0][1]);
      ctx.moveTo(sx, sy);
      for (let i = 1; i < segment.length; i++) {
        const [x, y] = this.toCanvas(segment[i][0], segment[i][1]);
        ctx.lineTo(x, y);
      }
      ctx.stroke();
    }

    ctx.font = "11px sans-serif";
    for (const marker of this.markers) {
      const [x, y] = this.toCanvas(marker.x, marker.y);
      ctx.strokeStyle = MARKER_COLORS[marker.kind];
      ctx.beginPath();
      ctx.moveTo(x - 6, y);
      ctx.lineTo(x + 6, y);
      ctx.moveTo(x, y - 6);
      ctx.lineTo(x, y + 6);
      ctx.stroke();
      ctx.fillStyle = MARKER_COLORS[marker.kind];
      ctx.fillText(marker.label, x + 7, y - 5);
    }

    if (this.hover && this.view.scale > 4) this.drawLoupe(ctx);
  }

  /** Magnifier loupe above 4x zoom for sub-pixel annotation precision. */
  private drawLoupe(ctx: CanvasRenderingContext2D): void {
    if (!this.image || !this.hover) return;
    const size = 110;
    const zoom = 3;
    const [ix, iy] = this.toImage(this.hover.x, this.hover.y);
    const srcSize = size / (this.view.scale * zoom);
    const lx = Math.min(this.hover.x + 20, this.canvas.width - size - 4);
    const ly = Math.max(this.hover.y - size - 20, 4);
    ctx.save();
    ctx.beginPath();
    ctx.rect(lx, ly, size, size);
    ctx.clip();
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(
      this.image,
      ix - srcSize / 2,
      iy - srcSize / 2,
      srcSize,
      srcSize,
      lx,
      ly,
      size,
      size,
    );
    ctx.restore();
    ctx.strokeStyle = "#ffffff";
    ctx.strokeRect(lx, ly, size, size);
    ctx.beginPath();
    ctx.moveTo(lx + size / 2 - 5, ly + size / 2);
    ctx.lineTo(lx + size / 2 + 5, ly + size / 2);
    ctx.moveTo(lx + size / 2, ly + size / 2 - 5);
    ctx.lineTo(lx + size / 2, ly + size / 2 + 5);
    ctx.stroke();
  }
}
