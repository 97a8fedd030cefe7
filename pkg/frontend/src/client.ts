// Typed client for the annotation service. Every mutation path asserts
// that outgoing coordinates are integers in native image space; the
// service never sees display-space or fractional values.

import type { Patch } from "./geometry.js";

export interface FitOut {
  residual_rms: number;
  out_of_gamut_fraction: number;
  n_samples: number;
}

export interface RegionPair {
  patch_a: Patch;
  patch_b: Patch;
}

export interface RecordOut {
  pair_id: string;
  chart_a: Patch[];
  chart_b: Patch[];
  regions: RegionPair[];
  status: string;
  n_samples: number;
}

export interface MutationOut {
  record: RecordOut;
  fit: FitOut | null;
  fit_error: string | null;
}

export interface PairSummary {
  pair_id: string;
  split: string;
  camera_a: string;
  camera_b: string;
  n_samples: number;
  status: string;
}

export interface ImageOut {
  image_id: string;
  camera_id: string;
  split: string;
  scene_id: string;
  is_chart: boolean;
}

export interface PairDetail {
  pair_id: string;
  split: string;
  images: ImageOut[];
  annotate_a: string;
  annotate_b: string;
  record: RecordOut;
  fit: FitOut | null;
}

export class ServiceError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`service returned ${status}: ${JSON.stringify(detail)}`);
    this.status = status;
    this.detail = detail;
  }
}

export function assertNativeInteger(patch: Patch): void {
  if (
    !Number.isInteger(patch.x) ||
    !Number.isInteger(patch.y) ||
    !Number.isInteger(patch.size)
  ) {
    throw new Error(
      `patch must use integer native coordinates, got ` +
        `(${patch.x}, ${patch.y}, ${patch.size})`,
    );
  }
}

const strip = ({ x, y, size, label }: Patch): Patch =>
  label === undefined ? { x, y, size } : { x, y, size, label };

export class AnnotationClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail: unknown = null;
      try {
        detail = (await resp.json()).detail;
      } catch {
        detail = await resp.text().catch(() => "");
      }
      throw new ServiceError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  listPairs(): Promise<PairSummary[]> {
    return this.request("GET", "/pairs");
  }

  pairDetail(pairId: string): Promise<PairDetail> {
    return this.request("GET", `/pairs/${pairId}`);
  }

  previewUrl(imageId: string): string {
    return `${this.baseUrl}/images/${imageId}/preview`;
  }

  setChart(
    pairId: string,
    chartA: Patch[],
    chartB: Patch[],
  ): Promise<MutationOut> {
    chartA.forEach(assertNativeInteger);
    chartB.forEach(assertNativeInteger);
    return this.request("POST", `/pairs/${pairId}/chart`, {
      chart_a: chartA.map(strip),
      chart_b: chartB.map(strip),
    });
  }

  addRegion(pairId: string, patchA: Patch, patchB: Patch): Promise<MutationOut> {
    assertNativeInteger(patchA);
    assertNativeInteger(patchB);
    return this.request("POST", `/pairs/${pairId}/regions`, {
      patch_a: strip(patchA),
      patch_b: strip(patchB),
    });
  }

  deleteRegion(pairId: string, index: number): Promise<MutationOut> {
    return this.request("DELETE", `/pairs/${pairId}/regions/${index}`);
  }

  commit(pairId: string): Promise<MutationOut> {
    return this.request("POST", `/pairs/${pairId}/commit`);
  }

  fit(pairId: string): Promise<FitOut> {
    return this.request("GET", `/pairs/${pairId}/fit`);
  }
}
