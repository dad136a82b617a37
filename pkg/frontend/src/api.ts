import type {
  EditRequestBody,
  EditResponse,
  ExemplarList,
  Health,
  IdentityList,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** Thin typed client over the service's HTTP API. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) throw new ApiError(resp.status, await describe(resp));
    return (await resp.json()) as T;
  }

  health(): Promise<Health> {
    return this.get<Health>("/api/health");
  }

  identities(): Promise<IdentityList> {
    return this.get<IdentityList>("/api/identities");
  }

  exemplars(identity: string): Promise<ExemplarList> {
    return this.get<ExemplarList>(`/api/exemplars/${encodeURIComponent(identity)}`);
  }

  exemplarImageUrl(identity: string, name: string): string {
    return `${this.baseUrl}/api/exemplars/${encodeURIComponent(identity)}/${encodeURIComponent(name)}`;
  }

  async superresolve(
    body: EditRequestBody,
    signal?: AbortSignal,
  ): Promise<EditResponse> {
    const resp = await this.fetchFn(this.baseUrl + "/api/superresolve", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!resp.ok) throw new ApiError(resp.status, await describe(resp));
    return (await resp.json()) as EditResponse;
  }
}

async function describe(resp: Response): Promise<string> {
  try {
    const doc = await resp.json();
    return typeof doc?.detail === "string" ? doc.detail : resp.statusText;
  } catch {
    return resp.statusText;
  }
}
