/** Keyboard-first controls: 1-5 and a stage a rating, Enter confirms,
 * u undoes, g toggles the guideline panel. */

import type { Rating } from './types.js';

export type KeyAction =
  | { kind: 'stage'; rating: Rating }
  | { kind: 'confirm' }
  | { kind: 'undo' }
  | { kind: 'toggle-guidelines' }
  | null;

export function actionForKey(key: string): KeyAction {
  switch (key) {
    case '1':
    case '2':
    case '3':
    case '4':
    case '5':
      return { kind: 'stage', rating: key as Rating };
    case 'a':
    case 'A':
      return { kind: 'stage', rating: 'Ambiguous' };
    case 'Enter':
      return { kind: 'confirm' };
    case 'u':
    case 'U':
      return { kind: 'undo' };
    case 'g':
    case 'G':
      return { kind: 'toggle-guidelines' };
    default:
      return null;
  }
}
