import type {
  LabelAck,
  LabelValue,
  NextResponse,
  ProjectInfo,
  ReportBundle,
  SurveyAnswers,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

/** Thin typed client over the annotation backend; all state stays server-side. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const body = await response.json();
        if (body && typeof body.error === 'string') detail = body.error;
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createProject(body: {
    annotator_id: string;
    expertise: string;
    batch_id: string;
    setup: string;
    seed?: number;
  }): Promise<ProjectInfo> {
    return this.request('/projects', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  nextItem(projectId: string): Promise<NextResponse> {
    return this.request(`/projects/${projectId}/next`);
  }

  submitLabel(projectId: string, postId: string, label: LabelValue): Promise<LabelAck> {
    return this.request(`/projects/${projectId}/labels`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ post_id: postId, label }),
    });
  }

  submitSurvey(projectId: string, answers: SurveyAnswers): Promise<{ ok: boolean }> {
    return this.request(`/projects/${projectId}/survey`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(answers),
    });
  }

  agreementReport(batchId: string): Promise<ReportBundle> {
    return this.request(`/reports/agreement?batch=${encodeURIComponent(batchId)}`);
  }
}
