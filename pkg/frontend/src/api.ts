import type { ServiceErrorBody, TrialListEntry, TrialSnapshot } from "./types";

/** Error from the conduct service carrying its machine-readable code. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(detail);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let body: ServiceErrorBody = { error: "unknown", detail: response.statusText };
  try {
    body = (await response.json()) as ServiceErrorBody;
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new ApiError(response.status, body.error, body.detail);
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  createTrial(
    config: Record<string, unknown>,
    trialId?: string,
  ): Promise<TrialSnapshot> {
    return this.post("/trials", { config, trial_id: trialId });
  }

  submitBlock(
    trialId: string,
    block: {
      index: number;
      pi_a: number;
      n_a: number;
      n_b: number;
      y_a: number;
      y_b: number;
    },
  ): Promise<TrialSnapshot> {
    return this.post(`/trials/${encodeURIComponent(trialId)}/blocks`, block);
  }

  async getTrial(trialId: string): Promise<TrialSnapshot> {
    const response = await fetch(
      `${this.baseUrl}/trials/${encodeURIComponent(trialId)}`,
    );
    return parseOrThrow(response);
  }

  async listTrials(): Promise<TrialListEntry[]> {
    const response = await fetch(`${this.baseUrl}/trials`);
    return parseOrThrow(response);
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parseOrThrow(response);
  }
}
