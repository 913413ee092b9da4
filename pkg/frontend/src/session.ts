/** Annotation session state: the active pair, the one-sided pending click,
 * committed correspondences, and the current solution. A correspondence is
 * committed only when both sides are placed; the pending click survives
 * pan/zoom (it lives here, not in the view) but not a pair switch. */

import { ApiError, Client, Correspondence, EpipolarCurve, Solution } from "./api.js";

export type Side = "left" | "right";

export interface PendingClick {
  side: Side;
  x: number;
  y: number;
}

export interface OverlayResult {
  curve: EpipolarCurve | null;
  reason: string | null; // e.g. "solve first" before a solution exists
}

export class AnnotationSession {
  pair: [string, string] | null = null;
  pending: PendingClick | null = null;
  correspondences: Correspondence[] = [];
  solution: Solution | null = null;

  constructor(private client: Client) {}

  /** Switch the active pair; discards any pending half-click. */
  async setPair(a: string, b: string): Promise<void> {
    this.pair = [a, b];
    this.pending = null;
    this.solution = null;
    this.correspondences = await this.client.correspondences(a, b);
    try {
      this.solution = await this.client.solution(a, b);
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 409)) throw err;
    }
  }

  /** Record a click; commits (and POSTs) when the other side is pending.
   * Returns the committed correspondence, or null while half-placed. */
  async click(side: Side, x: number, y: number): Promise<Correspondence | null> {
    if (!this.pair) throw new Error("no active pair");
    if (!this.pending || this.pending.side === side) {
      this.pending = { side, x, y };
      return null;
    }
    const left = side === "left" ? { x, y } : this.pending;
    const right = side === "right" ? { x, y } : this.pending;
    const record = await this.client.addCorrespondence(this.pair[0], this.pair[1], {
      xa: left.x,
      ya: left.y,
      xb: right.x,
      yb: right.y,
    });
    this.pending = null;
    this.correspondences.push(record);
    return record;
  }

  discardPending(): void {
    this.pending = null;
  }

  async remove(id: number): Promise<void> {
    if (!this.pair) throw new Error("no active pair");
    await this.client.deleteCorrespondence(this.pair[0], this.pair[1], id);
    this.correspondences = this.correspondences.filter((c) => c.id !== id);
  }

  async solve(method: string = "manual"): Promise<Solution> {
    if (!this.pair) throw new Error("no active pair");
    this.solution = await this.client.solve(this.pair[0], this.pair[1], method);
    return this.solution;
  }

  /** Inlier badge for a correspondence id: true/false after a solve,
   * null while unsolved. */
  inlierBadge(id: number): boolean | null {
    if (!this.solution) return null;
    return this.solution.inlier_ids.includes(id);
  }

  /** Epipolar guidance polyline for a hover on the left image. All curve
   * math is the server's; before a solution exists there is no overlay. */
  async overlayFor(x: number, y: number): Promise<OverlayResult> {
    if (!this.pair) throw new Error("no active pair");
    if (!this.solution) return { curve: null, reason: "solve first" };
    try {
      const curve = await this.client.epipolarCurve(this.pair[0], this.pair[1], x, y);
      return { curve, reason: null };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        return { curve: null, reason: "solve first" };
      }
      throw err;
    }
  }
}
