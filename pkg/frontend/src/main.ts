import { ApiClient } from './api.js';
import { ReviewConsole } from './ui.js';

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get('api') ?? 'http://127.0.0.1:8008';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app container');

const console_ = new ReviewConsole(root, new ApiClient(baseUrl), {
  onError: (error) => showToast(String(error)),
});

const session = params.get('session');
if (session) void console_.attach(session);

function showToast(message: string): void {
  const toast = document.createElement('div');
  toast.className = 'toast';
  toast.textContent = message;
  document.body.appendChild(toast);
  setTimeout(() => toast.remove(), 4000);
}
