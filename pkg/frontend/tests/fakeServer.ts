/**
 * In-memory stand-in for the annotation backend, faithful to its HTTP
 * contract (paths, methods, status codes, and JSON shapes). Tests drive the
 * real UI code against this via the injected fetch.
 */
import type { FetchLike } from '../src/api.js';
import type { ReportBundle, SetupValue } from '../src/types.js';

const DELIMITER = '— AI explanation —';

interface FakeProject {
  project_id: string;
  annotator_id: string;
  setup: SetupValue;
  batch_id: string;
  item_order: string[];
}

function djb2(text: string): number {
  let hash = 5381;
  for (let i = 0; i < text.length; i += 1) {
    hash = ((hash << 5) + hash + text.charCodeAt(i)) >>> 0;
  }
  return hash;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export class FakeBackend {
  readonly posts = new Map<string, string>();
  readonly batches = new Map<string, string[]>();
  readonly projects = new Map<string, FakeProject>();
  readonly labels = new Map<string, Map<string, string>>();
  readonly surveys = new Map<string, unknown>();
  labelRequests = 0;
  /** when > 0, that many label submissions fail with a network error */
  failNextLabels = 0;
  report: ReportBundle = { groups: {}, relative_diffs: [] };

  addBatch(batchId: string, size: number): void {
    const items: string[] = [];
    for (let i = 0; i < size; i += 1) {
      const postId = `p${String(i).padStart(3, '0')}`;
      items.push(postId);
      this.posts.set(postId, `caption for ${postId} #life`);
    }
    this.batches.set(batchId, items);
  }

  private explanationBlock(postId: string): string {
    return `${DELIMITER}\nKey indicators: '@brand', 'code'.\nThe caption for ${postId} reads like a promotion.`;
  }

  readonly fetch: FetchLike = async (input, init) => {
    const url = new URL(input, 'http://fake');
    const method = (init?.method ?? 'GET').toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    const parts = url.pathname.split('/').filter(Boolean);

    if (method === 'POST' && url.pathname === '/projects') {
      const items = this.batches.get(body.batch_id);
      if (!items) return json(404, { error: `unknown batch '${body.batch_id}'` });
      const projectId = `proj-${body.annotator_id}-${body.setup}`;
      if (this.projects.has(projectId)) {
        return json(409, { error: 'project already exists' });
      }
      const order = [...items].sort(
        (a, b) => djb2(projectId + a) - djb2(projectId + b),
      );
      const project: FakeProject = {
        project_id: projectId,
        annotator_id: body.annotator_id,
        setup: body.setup,
        batch_id: body.batch_id,
        item_order: order,
      };
      this.projects.set(projectId, project);
      this.labels.set(projectId, new Map());
      return json(201, {
        project_id: projectId,
        annotator_id: body.annotator_id,
        setup: body.setup,
        batch_id: body.batch_id,
        total: order.length,
        created_at: '2026-01-01T00:00:00+00:00',
      });
    }

    if (parts[0] === 'projects' && parts.length === 3) {
      const project = this.projects.get(parts[1]);
      if (!project) return json(404, { error: `unknown project '${parts[1]}'` });
      const labeled = this.labels.get(project.project_id)!;

      if (method === 'GET' && parts[2] === 'next') {
        const index = project.item_order.findIndex((postId) => !labeled.has(postId));
        if (index === -1) {
          return json(200, {
            done: true,
            survey_required:
              project.setup === 'WithExplanations' && !this.surveys.has(project.project_id),
          });
        }
        const postId = project.item_order[index];
        return json(200, {
          done: false,
          item: {
            post_id: postId,
            caption: this.posts.get(postId) ?? '',
            explanation_block:
              project.setup === 'WithExplanations' ? this.explanationBlock(postId) : null,
            position: index + 1,
            total: project.item_order.length,
          },
        });
      }

      if (method === 'POST' && parts[2] === 'labels') {
        this.labelRequests += 1;
        if (this.failNextLabels > 0) {
          this.failNextLabels -= 1;
          throw new TypeError('network error');
        }
        if (!project.item_order.includes(body.post_id)) {
          return json(400, { error: `post '${body.post_id}' is not in this batch` });
        }
        if (body.label !== 'Sponsored' && body.label !== 'NonSponsored') {
          return json(422, { error: `bad label '${body.label}'` });
        }
        labeled.set(body.post_id, body.label);
        return json(200, { ok: true, progress: labeled.size });
      }

      if (method === 'POST' && parts[2] === 'survey') {
        if (project.setup !== 'WithExplanations') {
          return json(400, { error: 'the survey targets explanation-setup projects only' });
        }
        if (this.surveys.has(project.project_id)) {
          return json(409, { error: 'survey already submitted' });
        }
        for (const field of ['q1_helpful', 'q2_accurate', 'q3_agree_freq']) {
          const value = body[field];
          if (typeof value !== 'number' || value < 1 || value > 5) {
            return json(400, { error: `${field} must be in 1..5` });
          }
        }
        this.surveys.set(project.project_id, body);
        return json(201, { ok: true });
      }
    }

    if (method === 'GET' && url.pathname === '/reports/agreement') {
      return json(200, this.report);
    }

    return json(404, { error: `no route for ${method} ${url.pathname}` });
  };
}
