// Typed client for the collection service. All UI state derives from
// these responses; the base URL is the only configuration.

export interface RoundItem {
  id: string;
  asset_url: string;
  clip_span: [number, number] | null;
  triggering_attribute: string | null;
  prompt?: string;
}

export interface RoundSkeleton {
  round_index: number;
  kind: 'normal' | 'double_check';
  sampled: string[];
  items: RoundItem[];
}

export interface SessionStatus {
  phase: 'proposing' | 'interactive' | 'auto' | 'done';
  rounds: number;
  buffer_len: number;
  manifest_count: number;
  policy_version: number;
}

export interface FeedbackPayload {
  round_index: number;
  sampled: string[];
  accepted: string[];
  rejected: string[];
  comments: { video_id: string; text: string }[];
  kind: string;
}

export interface ManifestEntry {
  video_id: string;
  source_url: string;
  clip_span: [number, number] | null;
  asset_path: string;
  decision_provenance: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail: unknown = null,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<never> {
  let code = 'internal';
  let message = response.statusText;
  let detail: unknown = null;
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? message;
    detail = body.detail ?? null;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, code, message, detail);
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(this.url(path));
    if (!response.ok) await parseError(response);
    return response.json() as Promise<T>;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(this.url(path), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) await parseError(response);
    return response.json() as Promise<T>;
  }

  createSession(query: string, config?: Record<string, unknown>): Promise<{ session_id: string; phase: string }> {
    return this.post('/sessions', config ? { query, config } : { query });
  }

  status(sessionId: string): Promise<SessionStatus> {
    return this.get(`/sessions/${sessionId}/status`);
  }

  round(sessionId: string): Promise<RoundSkeleton> {
    return this.get(`/sessions/${sessionId}/round`);
  }

  submitFeedback(sessionId: string, payload: FeedbackPayload): Promise<{ phase: string; terminated: boolean }> {
    return this.post(`/sessions/${sessionId}/feedback`, payload);
  }

  startAuto(sessionId: string, budget: number): Promise<{ accepted: boolean }> {
    return this.post(`/sessions/${sessionId}/auto`, { budget });
  }

  reset(sessionId: string): Promise<{ phase: string }> {
    return this.post(`/sessions/${sessionId}/reset`, {});
  }

  assetUrl(item: RoundItem): string {
    return this.url(item.asset_url);
  }

  async manifest(sessionId: string): Promise<ManifestEntry[]> {
    const response = await fetch(this.url(`/sessions/${sessionId}/manifest`));
    if (!response.ok) await parseError(response);
    const text = await response.text();
    const lines = text.split('\n').filter((line) => line.trim());
    // first line is the header record
    return lines.slice(1).map((line) => JSON.parse(line) as ManifestEntry);
  }

  async waitForPhase(sessionId: string, phase: string, timeoutMs = 20000): Promise<SessionStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.status(sessionId);
      if (status.phase === phase) return status;
      if (Date.now() > deadline) throw new Error(`session never reached phase ${phase}`);
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
  }
}
