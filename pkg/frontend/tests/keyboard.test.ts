import { describe, expect, it } from 'vitest';

import { actionForKey } from '../src/keyboard.js';

describe('keyboard mapping', () => {
  it('maps digits 1-5 to staged ratings', () => {
    for (const key of ['1', '2', '3', '4', '5'] as const) {
      expect(actionForKey(key)).toEqual({ kind: 'stage', rating: key });
    }
  });

  it('maps a/A to Ambiguous', () => {
    expect(actionForKey('a')).toEqual({ kind: 'stage', rating: 'Ambiguous' });
    expect(actionForKey('A')).toEqual({ kind: 'stage', rating: 'Ambiguous' });
  });

  it('maps Enter to confirm and u to undo', () => {
    expect(actionForKey('Enter')).toEqual({ kind: 'confirm' });
    expect(actionForKey('u')).toEqual({ kind: 'undo' });
  });

  it('maps g to the guideline toggle', () => {
    expect(actionForKey('g')).toEqual({ kind: 'toggle-guidelines' });
  });

  it('ignores unmapped keys', () => {
    for (const key of ['6', '0', 'x', 'Escape', ' ']) {
      expect(actionForKey(key)).toBeNull();
    }
  });
});
