import type { ApiClient } from './api.js';
import type { ItemView, LabelValue, NextResponse } from './types.js';

const LABELS: { value: LabelValue; text: string; key: string }[] = [
  { value: 'Sponsored', text: 'Sponsored', key: '1' },
  { value: 'NonSponsored', text: 'Non-Sponsored', key: '2' },
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text) node.textContent = text;
  return node;
}

function isMalformed(item: ItemView): boolean {
  return (
    typeof item.post_id !== 'string' ||
    typeof item.caption !== 'string' ||
    !item.post_id ||
    typeof item.position !== 'number' ||
    typeof item.total !== 'number'
  );
}

/**
 * One annotator's labelling session. All persistent state lives behind the
 * API; the screen only holds the item on display and an in-flight label so a
 * failed submission can be retried without losing the choice.
 */
export class AnnotationScreen {
  private current: ItemView | null = null;
  private pending: LabelValue | null = null;
  private inFlight = false;

  private readonly progressNode = el('div', 'progress');
  private readonly captionNode = el('div', 'caption');
  private readonly explanationNode = el('section', 'explanation');
  private readonly errorBanner = el('div', 'banner banner--error');
  private readonly retryBanner = el('div', 'banner banner--retry');
  private readonly retryButton = el('button', 'retry', 'Retry submission');
  private readonly doneNode = el('div', 'done');
  private readonly buttons = new Map<LabelValue, HTMLButtonElement>();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly projectId: string,
  ) {
    this.root.replaceChildren();
    this.root.append(this.progressNode, this.captionNode);

    const controls = el('div', 'label-buttons');
    for (const { value, text } of LABELS) {
      const button = el('button', 'label-button', text);
      button.dataset.label = value;
      button.addEventListener('click', () => void this.submit(value));
      this.buttons.set(value, button);
      controls.append(button);
    }
    this.retryBanner.append(
      el('span', 'banner__text', 'Could not reach the server; your label is kept locally.'),
      this.retryButton,
    );
    this.retryButton.addEventListener('click', () => void this.retry());
    this.hide(this.errorBanner, this.retryBanner, this.explanationNode, this.doneNode);
    this.root.append(this.explanationNode, controls, this.errorBanner, this.retryBanner, this.doneNode);

    this.root.addEventListener('keydown', (event: KeyboardEvent) => {
      const match = LABELS.find((entry) => entry.key === event.key);
      if (match && this.current && !this.inFlight) void this.submit(match.value);
    });
  }

  async start(): Promise<void> {
    await this.advance();
  }

  private hide(...nodes: HTMLElement[]): void {
    for (const node of nodes) node.hidden = true;
  }

  private setButtonsEnabled(enabled: boolean): void {
    for (const button of this.buttons.values()) button.disabled = !enabled;
  }

  private renderItem(item: ItemView): void {
    if (isMalformed(item)) {
      this.current = null;
      this.setButtonsEnabled(false);
      this.errorBanner.textContent = 'This item could not be displayed; nothing was submitted.';
      this.errorBanner.hidden = false;
      return;
    }
    this.current = item;
    this.errorBanner.hidden = true;
    this.progressNode.textContent = `${item.position} / ${item.total}`;
    this.captionNode.textContent = item.caption;
    if (item.explanation_block) {
      // the block arrives with its divider line; keep it verbatim
      this.explanationNode.textContent = item.explanation_block;
      this.explanationNode.hidden = false;
    } else {
      this.explanationNode.textContent = '';
      this.explanationNode.hidden = true;
    }
    this.setButtonsEnabled(true);
  }

  private renderDone(surveyRequired: boolean): void {
    this.current = null;
    this.progressNode.textContent = 'done';
    this.captionNode.textContent = '';
    this.explanationNode.hidden = true;
    this.setButtonsEnabled(false);
    this.doneNode.replaceChildren(el('p', 'done__text', 'All posts are labelled. Thank you!'));
    if (surveyRequired) {
      const link = el('a', 'done__survey-link', 'Continue to the survey');
      link.setAttribute('href', `?project=${this.projectId}&screen=survey`);
      this.doneNode.append(link);
    }
    this.doneNode.hidden = false;
  }

  private async advance(): Promise<void> {
    let next: NextResponse;
    try {
      next = await this.api.nextItem(this.projectId);
    } catch (error) {
      this.errorBanner.textContent = `Could not load the next post (${String(error)}).`;
      this.errorBanner.hidden = false;
      this.setButtonsEnabled(false);
      return;
    }
    if (next.done) {
      this.renderDone(next.survey_required);
    } else {
      this.renderItem(next.item);
    }
  }

  private async submit(label: LabelValue): Promise<void> {
    if (!this.current || this.inFlight) return;
    this.inFlight = true;
    this.pending = label;
    this.setButtonsEnabled(false);
    try {
      await this.api.submitLabel(this.projectId, this.current.post_id, label);
    } catch {
      // keep the label locally and offer a retry
      this.retryBanner.hidden = false;
      this.inFlight = false;
      return;
    }
    this.pending = null;
    this.retryBanner.hidden = true;
    this.inFlight = false;
    await this.advance();
  }

  private async retry(): Promise<void> {
    if (this.pending === null || this.inFlight) return;
    const label = this.pending;
    this.pending = null;
    await this.submit(label);
  }
}
