import { AnnotationScreen } from './annotate.js';
import { ApiClient } from './api.js';
import { loadDashboard } from './dashboard.js';
import { SurveyScreen } from './survey.js';

function start(): void {
  const root = document.getElementById('app');
  if (!root) return;
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(params.get('api') ?? '');

  const batch = params.get('batch');
  if (batch) {
    void loadDashboard(root, api, batch);
    return;
  }
  const project = params.get('project');
  if (project && params.get('screen') === 'survey') {
    new SurveyScreen(root, api, project);
    return;
  }
  if (project) {
    void new AnnotationScreen(root, api, project).start();
    return;
  }
  const hint = document.createElement('p');
  hint.textContent =
    'Open with ?project=<project-token> to annotate or ?batch=<batch-id> for the dashboard.';
  root.append(hint);
}

document.addEventListener('DOMContentLoaded', start);
