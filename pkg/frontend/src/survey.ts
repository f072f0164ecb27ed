import type { ApiClient } from './api.js';
import type { SurveyAnswers } from './types.js';

export const SCALE_QUESTIONS = [
  {
    field: 'q1_helpful',
    text:
      'On a scale of 1 (not helpful) to 5 (extremely helpful), how helpful were ' +
      'the explanations in identifying undisclosed advertisement partnerships?',
  },
  {
    field: 'q2_accurate',
    text:
      'How accurate, from 1 (extremely inaccurate) to 5 (extremely accurate), ' +
      'did you think the explanations were?',
  },
  {
    field: 'q3_agree_freq',
    text:
      'How often, from 1 (0% of the time) to 5 (100% of the time), did you ' +
      'agree with the AI explanations?',
  },
] as const;

export const CONFIDENCE_QUESTION =
  'Did the AI explanations help you feel more confident in your decision-making?';

export const ASPECT_QUESTION =
  'What aspects of the AI explanations were most helpful for your decision-making process?';

export const ASPECT_OPTIONS: { value: string; text: string }[] = [
  { value: 'Reasoning', text: 'Reasoning' },
  { value: 'SpecificWords', text: 'Identifying specific words or phrases' },
  { value: 'ClearExamples', text: 'Clear examples' },
  { value: 'Other', text: 'Other (specify)' },
  { value: 'None', text: 'None' },
];

export const OPEN_QUESTIONS = [
  {
    field: 'q6_understanding',
    text:
      'In what ways did the AI explanations improve your understanding of what ' +
      'constitutes an undisclosed advertisement partnership?',
  },
  {
    field: 'q7_improvements',
    text:
      'How could the AI explanations be further improved to better support your ' +
      'decision-making process? Did you find anything noticeable you want us to know?',
  },
] as const;

function fieldset(question: string): HTMLFieldSetElement {
  const set = document.createElement('fieldset');
  const legend = document.createElement('legend');
  legend.textContent = question;
  set.append(legend);
  return set;
}

function scaleInputs(name: string): HTMLFieldSetElement {
  const set = fieldset('');
  set.querySelector('legend')?.remove();
  for (let value = 1; value <= 5; value += 1) {
    const label = document.createElement('label');
    const input = document.createElement('input');
    input.type = 'radio';
    input.name = name;
    input.value = String(value);
    label.append(input, document.createTextNode(String(value)));
    set.append(label);
  }
  return set;
}

/** The post-annotation questionnaire; validates locally and submits once. */
export class SurveyScreen {
  private readonly form = document.createElement('form');
  private readonly validation = document.createElement('div');
  private readonly submitButton = document.createElement('button');
  private submitted = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly projectId: string,
  ) {
    this.form.className = 'survey';
    this.validation.className = 'survey__validation';
    this.validation.hidden = true;

    for (const { field, text } of SCALE_QUESTIONS) {
      const set = fieldset(text);
      set.dataset.field = field;
      set.append(scaleInputs(field));
      this.form.append(set);
    }

    const confidence = fieldset(CONFIDENCE_QUESTION);
    confidence.dataset.field = 'q4_confidence';
    for (const option of ['Yes', 'No']) {
      const label = document.createElement('label');
      const input = document.createElement('input');
      input.type = 'radio';
      input.name = 'q4_confidence';
      input.value = option;
      label.append(input, document.createTextNode(option));
      confidence.append(label);
    }
    this.form.append(confidence);

    const aspects = fieldset(ASPECT_QUESTION);
    aspects.dataset.field = 'q5_aspects';
    for (const { value, text } of ASPECT_OPTIONS) {
      const label = document.createElement('label');
      const input = document.createElement('input');
      input.type = 'checkbox';
      input.name = 'q5_aspects';
      input.value = value;
      label.append(input, document.createTextNode(text));
      aspects.append(label);
    }
    const otherText = document.createElement('input');
    otherText.type = 'text';
    otherText.name = 'q5_other_text';
    otherText.placeholder = 'If other, which aspect?';
    aspects.append(otherText);
    this.form.append(aspects);

    for (const { field, text } of OPEN_QUESTIONS) {
      const set = fieldset(text);
      set.dataset.field = field;
      const area = document.createElement('textarea');
      area.name = field;
      set.append(area);
      this.form.append(set);
    }

    this.submitButton.type = 'submit';
    this.submitButton.textContent = 'Submit survey';
    this.form.append(this.validation, this.submitButton);
    this.form.addEventListener('submit', (event) => {
      event.preventDefault();
      void this.submit();
    });
    this.root.replaceChildren(this.form);
  }

  private readScale(name: string): number | null {
    const checked = this.form.querySelector<HTMLInputElement>(
      `input[name="${name}"]:checked`,
    );
    return checked ? Number(checked.value) : null;
  }

  /** null means a closed question is unanswered; the message names it. */
  collect(): { answers: SurveyAnswers | null; problem: string | null } {
    for (const { field } of SCALE_QUESTIONS) {
      if (this.readScale(field) === null) {
        return { answers: null, problem: `Please answer: ${field}` };
      }
    }
    const confidence = this.form.querySelector<HTMLInputElement>(
      'input[name="q4_confidence"]:checked',
    );
    if (!confidence) {
      return { answers: null, problem: 'Please answer: q4_confidence' };
    }
    const aspects = Array.from(
      this.form.querySelectorAll<HTMLInputElement>('input[name="q5_aspects"]:checked'),
    ).map((input) => input.value);
    if (aspects.length === 0) {
      return { answers: null, problem: 'Please answer: q5_aspects' };
    }
    const otherText = this.form.querySelector<HTMLInputElement>(
      'input[name="q5_other_text"]',
    );
    if (aspects.includes('Other') && !otherText?.value.trim()) {
      return { answers: null, problem: 'Please specify the other aspect' };
    }
    const open: Record<string, string> = {};
    for (const { field } of OPEN_QUESTIONS) {
      open[field] =
        this.form.querySelector<HTMLTextAreaElement>(`textarea[name="${field}"]`)?.value ?? '';
    }
    return {
      answers: {
        q1_helpful: this.readScale('q1_helpful')!,
        q2_accurate: this.readScale('q2_accurate')!,
        q3_agree_freq: this.readScale('q3_agree_freq')!,
        q4_confidence: confidence.value === 'Yes',
        q5_aspects: aspects,
        q5_other_text: otherText?.value ?? '',
        q6_understanding: open.q6_understanding,
        q7_improvements: open.q7_improvements,
      },
      problem: null,
    };
  }

  async submit(): Promise<void> {
    if (this.submitted) return;
    const { answers, problem } = this.collect();
    if (!answers) {
      this.validation.textContent = problem;
      this.validation.hidden = false;
      return;
    }
    this.validation.hidden = true;
    this.submitButton.disabled = true;
    try {
      await this.api.submitSurvey(this.projectId, answers);
    } catch (error) {
      this.validation.textContent = `Submission failed (${String(error)}); please retry.`;
      this.validation.hidden = false;
      this.submitButton.disabled = false;
      return;
    }
    this.submitted = true;
    this.form.replaceChildren(
      Object.assign(document.createElement('p'), {
        className: 'survey__thanks',
        textContent: 'Survey recorded. Thank you!',
      }),
    );
  }
}
