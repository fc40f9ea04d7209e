/** Thin fetch client for the annotation endpoints. */

import type { ClientConfig, ProgressView, Rating, SubmitAck, TaskView } from './types.js';

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly kind: 'network' | 'http',
    public readonly status?: number,
  ) {
    super(message);
  }
}

/** What the session needs from the service; AnnotationClient is the real one. */
export interface AnnotationApi {
  nextTask(): Promise<TaskView | null>;
  submit(sentenceId: string, rating: Rating): Promise<SubmitAck>;
  progress(): Promise<ProgressView>;
}

export class AnnotationClient implements AnnotationApi {
  constructor(private readonly config: ClientConfig) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.config.token) headers['Authorization'] = `Bearer ${this.config.token}`;
    return headers;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await fetch(`${this.config.baseUrl}${path}`, {
        ...init,
        headers: { ...this.headers(), ...(init?.headers ?? {}) },
      });
    } catch (err) {
      throw new ApiError(`service unreachable: ${err}`, 'network');
    }
    if (!response.ok && response.status !== 204) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        detail = body.message ?? body.detail?.message ?? JSON.stringify(body);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(detail, 'http', response.status);
    }
    return response;
  }

  /** Next pending task, or null when the batch is complete. */
  async nextTask(): Promise<TaskView | null> {
    const response = await this.request(
      `/annotation/next?annotator=${encodeURIComponent(this.config.annotator)}`,
    );
    if (response.status === 204) return null;
    return (await response.json()) as TaskView;
  }

  async submit(sentenceId: string, rating: Rating): Promise<SubmitAck> {
    const response = await this.request('/annotation/submit', {
      method: 'POST',
      body: JSON.stringify({
        sentence_id: sentenceId,
        annotator: this.config.annotator,
        rating,
      }),
    });
    return (await response.json()) as SubmitAck;
  }

  async progress(): Promise<ProgressView> {
    const response = await this.request('/annotation/progress');
    return (await response.json()) as ProgressView;
  }
}
