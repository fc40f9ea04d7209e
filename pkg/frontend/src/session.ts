/** Annotation session state machine.
 *
 * One outstanding task at a time: a rating is staged locally, submitted on
 * confirm, and the next task is fetched only after the server acknowledges.
 * A failed submit keeps the staged rating for retry; undo re-opens the
 * previously acknowledged sentence (the server resolves it by supersession).
 */

import { AnnotationApi, ApiError } from './api.js';
import type { Rating, SubmitAck, TaskView } from './types.js';

export type SessionState =
  | { kind: 'loading' }
  | {
      kind: 'task';
      task: TaskView;
      staged: Rating | null;
      submitting: boolean;
      retryMessage: string | null;
    }
  | { kind: 'complete'; done: number }
  | { kind: 'blocked'; message: string };

interface PreviousSubmission {
  task: TaskView;
  rating: Rating;
}

export class AnnotationSession {
  private state: SessionState = { kind: 'loading' };
  private previous: PreviousSubmission | null = null;
  private listeners: Array<(state: SessionState) => void> = [];
  lastAck: SubmitAck | null = null;

  constructor(private readonly client: AnnotationApi) {}

  getState(): SessionState {
    return this.state;
  }

  onChange(listener: (state: SessionState) => void): void {
    this.listeners.push(listener);
  }

  private setState(state: SessionState): void {
    this.state = state;
    for (const listener of this.listeners) listener(state);
  }

  canUndo(): boolean {
    return this.previous !== null && this.state.kind !== 'loading';
  }

  async start(): Promise<void> {
    await this.fetchNext();
  }

  private async fetchNext(): Promise<void> {
    this.setState({ kind: 'loading' });
    let task: TaskView | null;
    try {
      task = await this.client.nextTask();
    } catch (err) {
      this.setState({ kind: 'blocked', message: String((err as Error).message ?? err) });
      return;
    }
    if (task === null) {
      const done = this.previous ? this.previous.task.total : 0;
      this.setState({ kind: 'complete', done });
      return;
    }
    this.setState({ kind: 'task', task, staged: null, submitting: false, retryMessage: null });
  }

  stage(rating: Rating): void {
    if (this.state.kind !== 'task' || this.state.submitting) return;
    if (!this.state.task.allowed_ratings.includes(rating)) return;
    this.setState({ ...this.state, staged: rating, retryMessage: null });
  }

  /** Submit the staged rating; advances only after the acknowledgment. */
  async confirm(): Promise<void> {
    if (this.state.kind !== 'task' || this.state.submitting) return;
    const { task, staged } = this.state;
    if (staged === null) return;
    this.setState({ ...this.state, submitting: true, retryMessage: null });
    let ack: SubmitAck;
    try {
      ack = await this.client.submit(task.sentence_id, staged);
    } catch (err) {
      // Rating stays staged locally until the server acknowledges it.
      const message =
        err instanceof ApiError && err.kind === 'network'
          ? `submission failed, rating kept - retry (${err.message})`
          : `submission rejected: ${(err as Error).message}`;
      this.setState({ kind: 'task', task, staged, submitting: false, retryMessage: message });
      return;
    }
    this.lastAck = ack;
    this.previous = { task, rating: staged };
    await this.fetchNext();
  }

  /** One-step undo: re-open the previously acknowledged sentence. */
  undo(): void {
    if (!this.previous) return;
    if (this.state.kind === 'task' && this.state.submitting) return;
    const { task, rating } = this.previous;
    this.previous = null;
    this.setState({ kind: 'task', task, staged: rating, submitting: false, retryMessage: null });
  }
}
