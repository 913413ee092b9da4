/** Typed client for the spheresfm HTTP API. The UI holds no authoritative
 * state: everything shown is fetched from these endpoints, and all epipolar
 * math happens server-side. */

export interface ImageInfo {
  id: string;
  width: number;
  height: number;
}

export interface PairStatus {
  n_manual: number;
  n_imported: number;
  n_augmented: number;
  solved: boolean;
}

export interface ProjectSummary {
  images: ImageInfo[];
  pairs: Record<string, PairStatus>;
  registered: boolean;
  n_points: number;
  dense_pairs: string[];
}

export interface Correspondence {
  id: number;
  image_a: string;
  image_b: string;
  xa: number;
  ya: number;
  xb: number;
  yb: number;
  source: string;
  residual: number | null;
}

export interface Solution {
  F: number[][];
  e1: number[];
  e2: number[];
  R: number[][];
  inlier_ids: number[];
  method: string;
  inlier_mask?: boolean[];
}

export interface EpipolarCurve {
  segments: number[][][];
  degenerate: boolean;
}

export interface RigCamera {
  image_id: string;
  theta: number;
  center: number[];
}

export interface CloudPoint {
  track_id: number;
  P: number[];
  color: number[];
  accepted: boolean;
  rms_residual: number;
  observations: Record<string, number[]>;
}

export interface PointCloud {
  cameras: RigCamera[];
  points: CloudPoint[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public category: string,
    message: string,
  ) {
    super(message);
  }
}

export class Client {
  constructor(private base: string = "") {}

  imageUrl(id: string): string {
    return `${this.base}/api/images/${encodeURIComponent(id)}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      let category = "HttpError";
      let message = response.statusText;
      try {
        const body = await response.json();
        category = body.error ?? category;
        message = body.message ?? message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, category, message);
    }
    return (await response.json()) as T;
  }

  project(): Promise<ProjectSummary> {
    return this.request("/api/project");
  }

  async correspondences(a: string, b: string): Promise<Correspondence[]> {
    const doc = await this.request<{ correspondences: Correspondence[] }>(
      `/api/pairs/${a}/${b}/correspondences`,
    );
    return doc.correspondences;
  }

  addCorrespondence(
    a: string,
    b: string,
    pts: { xa: number; ya: number; xb: number; yb: number },
  ): Promise<Correspondence> {
    return this.request(`/api/pairs/${a}/${b}/correspondences`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(pts),
    });
  }

  deleteCorrespondence(a: string, b: string, id: number): Promise<unknown> {
    return this.request(`/api/pairs/${a}/${b}/correspondences/${id}`, {
      method: "DELETE",
    });
  }

  solve(a: string, b: string, method: string = "manual"): Promise<Solution> {
    return this.request(`/api/pairs/${a}/${b}/solve`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ method }),
    });
  }

  solution(a: string, b: string): Promise<Solution> {
    return this.request(`/api/pairs/${a}/${b}/solution`);
  }

  epipolarCurve(
    a: string,
    b: string,
    x: number,
    y: number,
  ): Promise<EpipolarCurve> {
    return this.request(
      `/api/pairs/${a}/${b}/epipolar-curve?x=${x}&y=${y}`,
    );
  }

  register(): Promise<{ image_ids: string[] }> {
    return this.request("/api/register", { method: "POST" });
  }

  triangulate(): Promise<{ n_points: number; n_accepted: number }> {
    return this.request("/api/triangulate", { method: "POST" });
  }

  pointcloud(): Promise<PointCloud> {
    return this.request("/api/pointcloud");
  }
}
