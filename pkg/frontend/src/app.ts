/** DOM shell around the annotation session. Sentence text is rendered
 * verbatim (textContent, never markup) and other annotators' ratings are
 * never part of any payload this app sees. */

import { AnnotationApi, AnnotationClient } from './api.js';
import { actionForKey } from './keyboard.js';
import { AnnotationSession, SessionState } from './session.js';
import type { ClientConfig, Rating } from './types.js';

const GUIDELINES_TEXT =
  'Rate the stance of the sentence itself toward immigration, from 1 ' +
  '(anti-immigration) to 5 (pro-immigration); 3 is neutral. Use Ambiguous ' +
  'for unintelligible, non-topical or mixed-stance sentences. Rate only ' +
  'the sentence, not the surrounding article.';

export class App {
  readonly session: AnnotationSession;
  private guidelinesVisible = false;

  constructor(
    private readonly root: HTMLElement,
    config: ClientConfig,
    client?: AnnotationApi,
  ) {
    this.session = new AnnotationSession(client ?? new AnnotationClient(config));
    this.session.onChange(() => this.render());
  }

  async start(): Promise<void> {
    document.addEventListener('keydown', (event) => void this.handleKey(event.key));
    await this.session.start();
  }

  async handleKey(key: string): Promise<void> {
    const action = actionForKey(key);
    if (!action) return;
    switch (action.kind) {
      case 'stage':
        this.session.stage(action.rating);
        break;
      case 'confirm':
        await this.session.confirm();
        break;
      case 'undo':
        this.session.undo();
        break;
      case 'toggle-guidelines':
        this.guidelinesVisible = !this.guidelinesVisible;
        this.render();
        break;
    }
  }

  render(): void {
    const state = this.session.getState();
    this.root.replaceChildren();
    switch (state.kind) {
      case 'loading':
        this.root.append(el('p', 'status', 'Loading next sentence...'));
        break;
      case 'blocked':
        this.root.append(banner(`Service unreachable: ${state.message}. Nothing was lost; reload to retry.`));
        break;
      case 'complete':
        this.root.append(el('h2', 'complete', 'Batch complete'));
        this.root.append(el('p', 'status', 'Every assigned sentence is annotated.'));
        break;
      case 'task':
        this.renderTask(state);
        break;
    }
  }

  private renderTask(state: Extract<SessionState, { kind: 'task' }>): void {
    const { task, staged, submitting, retryMessage } = state;
    this.root.append(
      el('div', 'progress', `Sentence ${task.done + 1} of ${task.total}`),
    );
    const sentence = el('blockquote', 'sentence');
    sentence.textContent = task.text;
    this.root.append(sentence);

    const controls = el('div', 'controls');
    for (const rating of task.allowed_ratings) {
      const button = el('button', 'rating') as HTMLButtonElement;
      button.dataset.rating = rating;
      button.textContent =
        rating === 'Ambiguous' ? 'Ambiguous (a)' : `${rating} - ${task.rating_labels[rating]}`;
      if (rating === staged) button.classList.add('staged');
      button.disabled = submitting;
      button.addEventListener('click', () => this.session.stage(rating as Rating));
      controls.append(button);
    }
    this.root.append(controls);

    if (staged !== null) {
      this.root.append(
        el('div', 'hint', `Staged: ${staged} -> ${task.rating_labels[staged]} (Enter to confirm)`),
      );
    }
    const confirm = el('button', 'confirm') as HTMLButtonElement;
    confirm.textContent = submitting ? 'Submitting...' : 'Confirm (Enter)';
    confirm.disabled = submitting || staged === null;
    confirm.addEventListener('click', () => void this.session.confirm());
    this.root.append(confirm);

    const undo = el('button', 'undo') as HTMLButtonElement;
    undo.textContent = 'Undo previous (u)';
    undo.disabled = !this.session.canUndo();
    undo.addEventListener('click', () => this.session.undo());
    this.root.append(undo);

    if (retryMessage) this.root.append(banner(retryMessage));

    const toggle = el('button', 'guidelines-toggle') as HTMLButtonElement;
    toggle.textContent = this.guidelinesVisible ? 'Hide guidelines (g)' : 'Show guidelines (g)';
    toggle.addEventListener('click', () => void this.handleKey('g'));
    this.root.append(toggle);
    if (this.guidelinesVisible) {
      const panel = el('div', 'guidelines');
      panel.append(el('p', 'guidelines-text', GUIDELINES_TEXT));
      panel.append(el('p', 'guidelines-version', `Guidelines ${task.guideline_version}`));
      this.root.append(panel);
    }
  }
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function banner(message: string): HTMLElement {
  return el('div', 'banner', message);
}
