/** Entry point: configuration comes from the query string
 * (?base=http://127.0.0.1:8008&annotator=anna&token=...). */

import { App } from './app.js';

function configFromLocation() {
  const params = new URLSearchParams(window.location.search);
  return {
    baseUrl: params.get('base') ?? 'http://127.0.0.1:8008',
    annotator: params.get('annotator') ?? 'annotator',
    token: params.get('token') ?? undefined,
  };
}

const root = document.getElementById('app');
if (root) {
  void new App(root, configFromLocation()).start();
}
