import type { ApiClient } from './api.js';
import type { AgreementRow, ReportBundle } from './types.js';

function cell(value: number | null | undefined, digits = 2): string {
  return value === null || value === undefined ? '-' : value.toFixed(digits);
}

function table(headers: string[]): { table: HTMLTableElement; body: HTMLTableSectionElement } {
  const node = document.createElement('table');
  const head = node.createTHead().insertRow();
  for (const header of headers) {
    const th = document.createElement('th');
    th.textContent = header;
    head.append(th);
  }
  return { table: node, body: node.createTBody() };
}

function agreementRow(body: HTMLTableSectionElement, name: string, row: AgreementRow): void {
  const tr = body.insertRow();
  tr.insertCell().textContent = name;
  tr.insertCell().textContent = cell(row.alpha_pct);
  tr.insertCell().textContent = cell(row.absolute_pct);
  tr.insertCell().textContent = cell(row.one_disag_pct);
  tr.insertCell().textContent = cell(row.disclosed_acc_pct);
  tr.insertCell().textContent = cell(row.sponsored_pct);
  tr.insertCell().textContent = String(row.n_annotators);
}

/** Renders the report bundle exactly as served; no client-side recomputation. */
export function renderDashboard(root: HTMLElement, bundle: ReportBundle): void {
  root.replaceChildren();
  const groups = Object.entries(bundle.groups);
  if (groups.length === 0) {
    const empty = document.createElement('p');
    empty.className = 'dashboard__empty';
    empty.textContent = 'No labels collected yet for this batch.';
    root.append(empty);
    return;
  }

  const agreementSection = document.createElement('section');
  agreementSection.className = 'dashboard__agreement';
  const heading = document.createElement('h2');
  heading.textContent = 'Group agreement';
  const { table: agreementTable, body: agreementBody } = table([
    'group', 'alpha', 'abs', '1-disag', 'acc', 'sponsored', '#',
  ]);
  for (const [groupId, group] of groups) {
    agreementRow(agreementBody, groupId, group.agreement);
  }
  for (const diff of bundle.relative_diffs) {
    const tr = agreementBody.insertRow();
    tr.className = 'diff-row';
    tr.insertCell().textContent = `relative diff (${diff.base} -> ${diff.new})`;
    tr.insertCell().textContent = cell(diff.diffs.alpha_pct);
    tr.insertCell().textContent = cell(diff.diffs.absolute_pct);
    tr.insertCell().textContent = cell(diff.diffs.one_disag_pct);
    tr.insertCell().textContent = cell(diff.diffs.disclosed_acc_pct);
    tr.insertCell().textContent = cell(diff.diffs.sponsored_pct);
    tr.insertCell().textContent = '';
  }
  agreementSection.append(heading, agreementTable);
  root.append(agreementSection);

  const pairwiseRows = groups.filter(([, group]) => group.pairwise !== null);
  if (pairwiseRows.length > 0) {
    const section = document.createElement('section');
    section.className = 'dashboard__pairwise';
    const title = document.createElement('h2');
    title.textContent = 'Pairwise agreement';
    const { table: pairwiseTable, body } = table([
      'group', 'min abs', 'max abs', 'std', 'min alpha', 'max alpha', 'std',
    ]);
    for (const [groupId, group] of pairwiseRows) {
      const summary = group.pairwise!.summary;
      const tr = body.insertRow();
      tr.insertCell().textContent = groupId;
      tr.insertCell().textContent = cell(summary.min_abs);
      tr.insertCell().textContent = cell(summary.max_abs);
      tr.insertCell().textContent = cell(summary.std_abs);
      tr.insertCell().textContent = cell(summary.min_alpha);
      tr.insertCell().textContent = cell(summary.max_alpha);
      tr.insertCell().textContent = cell(summary.std_alpha);
    }
    section.append(title, pairwiseTable);
    root.append(section);
  }

  const biasRows = groups.filter(([, group]) => group.bias !== null);
  if (biasRows.length > 0) {
    const section = document.createElement('section');
    section.className = 'dashboard__bias';
    const title = document.createElement('h2');
    title.textContent = 'Model agreement';
    const { table: biasTable, body } = table(['group', 'sponsored', 'agreement', 'ties']);
    for (const [groupId, group] of biasRows) {
      const tr = body.insertRow();
      tr.insertCell().textContent = groupId;
      tr.insertCell().textContent = cell(group.bias!.sponsored_pct);
      tr.insertCell().textContent = cell(group.bias!.model_majority_agreement_pct);
      tr.insertCell().textContent = String(group.bias!.tie_items_excluded);
    }
    section.append(title, biasTable);
    root.append(section);
  }
}

export async function loadDashboard(
  root: HTMLElement,
  api: ApiClient,
  batchId: string,
): Promise<void> {
  try {
    renderDashboard(root, await api.agreementReport(batchId));
  } catch (error) {
    root.replaceChildren();
    const banner = document.createElement('p');
    banner.className = 'dashboard__error';
    banner.textContent = `Could not load the report (${String(error)}).`;
    root.append(banner);
  }
}
