import { beforeEach, describe, expect, it } from 'vitest';

import { App } from '../src/app.js';
import { FakeServer, sentenceFixtures } from './fake_server';

const config = { baseUrl: 'http://unused', annotator: 'tester' };

function makeApp(server: FakeServer) {
  document.body.innerHTML = '<div id="app"></div>';
  const root = document.getElementById('app') as HTMLElement;
  return { app: new App(root, config, server), root };
}

describe('annotation app DOM', () => {
  beforeEach(() => {
    document.body.innerHTML = '';
  });

  it('renders the sentence and all six rating controls', async () => {
    const { app, root } = makeApp(new FakeServer(sentenceFixtures(2)));
    await app.start();
    expect(root.querySelector('.sentence')?.textContent).toContain('Lause number 0');
    const buttons = root.querySelectorAll('button.rating');
    expect(buttons.length).toBe(6);
    const labels = Array.from(buttons).map((b) => b.textContent);
    expect(labels[0]).toContain('Against');
    expect(labels[3]).toContain('Supportive');
    expect(labels[5]).toContain('Ambiguous');
  });

  it('keypress stages a rating and shows the server-provided hint', async () => {
    const { app, root } = makeApp(new FakeServer(sentenceFixtures(1)));
    await app.start();
    await app.handleKey('3');
    const staged = root.querySelector('button.rating.staged');
    expect(staged?.getAttribute('data-rating')).toBe('3');
    expect(root.querySelector('.hint')?.textContent).toContain('3 -> Neutral');
  });

  it('submits on Enter and advances to the next sentence', async () => {
    const server = new FakeServer(sentenceFixtures(2));
    const { app, root } = makeApp(server);
    await app.start();
    await app.handleKey('4');
    await app.handleKey('Enter');
    expect(server.live.get('s0')).toBe('4');
    expect(root.querySelector('.sentence')?.textContent).toContain('Lause number 1');
  });

  it('shows the batch-complete state when the queue is empty', async () => {
    const { app, root } = makeApp(new FakeServer([]));
    await app.start();
    expect(root.querySelector('.complete')?.textContent).toBe('Batch complete');
  });

  it('shows a blocking banner when the service is down', async () => {
    const server = new FakeServer(sentenceFixtures(1));
    server.nextTask = async () => {
      throw new Error('ECONNREFUSED');
    };
    const { app, root } = makeApp(server);
    await app.start();
    expect(root.querySelector('.banner')?.textContent).toContain('Service unreachable');
  });

  it('toggles the guideline panel with g', async () => {
    const { app, root } = makeApp(new FakeServer(sentenceFixtures(1)));
    await app.start();
    expect(root.querySelector('.guidelines')).toBeNull();
    await app.handleKey('g');
    expect(root.querySelector('.guidelines-version')?.textContent).toContain('v1');
    await app.handleKey('g');
    expect(root.querySelector('.guidelines')).toBeNull();
  });

  it('renders sentence text verbatim, never as markup', async () => {
    const server = new FakeServer([{ id: 's0', text: '<img src=x onerror=alert(1)>' }]);
    const { app, root } = makeApp(server);
    await app.start();
    expect(root.querySelector('.sentence img')).toBeNull();
    expect(root.querySelector('.sentence')?.textContent).toContain('<img');
  });
});
