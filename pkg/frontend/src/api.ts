/** Typed client for the annotation service. All loop state changes go
 * through these endpoints and nothing else. */

import type { DatasetInfo, Metrics, SessionInfo, SuggestionInfo } from "./types.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) {
        detail = body.error;
      }
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  getSession(): Promise<SessionInfo> {
    return request<SessionInfo>(`${this.base}/api/session`);
  }

  getSuggestions(): Promise<SuggestionInfo[]> {
    return request<SuggestionInfo[]>(`${this.base}/api/suggestions`);
  }

  getDataset(): Promise<DatasetInfo> {
    return request<DatasetInfo>(`${this.base}/api/dataset`);
  }

  getMetrics(): Promise<Metrics> {
    return request<Metrics>(`${this.base}/api/metrics`);
  }

  imageUrl(id: number): string {
    return `${this.base}/api/sample/${id}/image`;
  }

  getAnnotation(id: number): Promise<{ labels: number[][] }> {
    return request<{ labels: number[][] }>(`${this.base}/api/sample/${id}/annotation`);
  }

  /** Post the label grid exactly as painted — no transformation. */
  submitAnnotation(id: number, labels: number[][]): Promise<{ ok: boolean }> {
    return request<{ ok: boolean }>(`${this.base}/api/sample/${id}/annotation`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ labels }),
    });
  }

  abort(): Promise<{ ok: boolean }> {
    return request<{ ok: boolean }>(`${this.base}/api/control/abort`, {
      method: "POST",
    });
  }
}
