/** In-memory stand-in implementing the service's annotation semantics:
 * queue order, one live record per (sentence, annotator) via supersession. */

import type { AnnotationApi } from '../src/api.js';
import { ApiError } from '../src/api.js';
import type { ProgressView, Rating, SubmitAck, TaskView } from '../src/types.js';

const RATING_LABELS: Record<Rating, string> = {
  '1': 'Against',
  '2': 'Against',
  '3': 'Neutral',
  '4': 'Supportive',
  '5': 'Supportive',
  Ambiguous: 'Ambiguous',
};

export class FakeServer implements AnnotationApi {
  readonly live = new Map<string, Rating>();
  readonly log: Array<{ sentenceId: string; rating: Rating }> = [];
  failNextSubmits = 0;

  constructor(
    private readonly sentences: Array<{ id: string; text: string }>,
    private readonly annotator = 'tester',
  ) {}

  async nextTask(): Promise<TaskView | null> {
    const pending = this.sentences.filter((s) => !this.live.has(s.id));
    if (pending.length === 0) return null;
    return {
      sentence_id: pending[0].id,
      text: pending[0].text,
      done: this.sentences.length - pending.length,
      total: this.sentences.length,
      guideline_version: 'v1',
      allowed_ratings: ['1', '2', '3', '4', '5', 'Ambiguous'],
      rating_labels: RATING_LABELS,
    };
  }

  async submit(sentenceId: string, rating: Rating): Promise<SubmitAck> {
    if (this.failNextSubmits > 0) {
      this.failNextSubmits -= 1;
      throw new ApiError('connection reset', 'network');
    }
    if (!RATING_LABELS[rating]) throw new ApiError('invalid rating', 'http', 422);
    this.live.set(sentenceId, rating);
    this.log.push({ sentenceId, rating });
    return {
      sentence_id: sentenceId,
      annotator: this.annotator,
      raw_rating: rating,
      label: RATING_LABELS[rating],
      created_at: new Date().toISOString(),
    };
  }

  async progress(): Promise<ProgressView> {
    return {
      annotators: {
        [this.annotator]: { assigned: this.sentences.length, done: this.live.size },
      },
      live_records: this.live.size,
    };
  }
}

export function sentenceFixtures(n: number): Array<{ id: string; text: string }> {
  return Array.from({ length: n }, (_, i) => ({
    id: `s${i}`,
    text: `Lause number ${i} immigratsioonist.`,
  }));
}
