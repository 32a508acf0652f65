import { ReviewApi } from './api';
import { ReviewController } from './controller';
import { renderPage } from './view';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app mount point');

const controller = new ReviewController(new ReviewApi(''), (state) => {
  root.innerHTML = renderPage(state);
});

root.addEventListener('click', (ev) => {
  const target = ev.target as HTMLElement;
  const row = target.closest<HTMLElement>('tr[data-warning-id]');
  if (row) {
    void controller.inspect(Number(row.dataset.warningId));
    return;
  }
  if (target.matches('button.filter')) {
    void controller.setFilter((target.dataset.filter ?? 'open') as never);
    return;
  }
  if (target.id === 'dismiss-button') {
    void controller.resolve('dismiss');
    return;
  }
  if (target.id === 'fix-button') {
    const input = document.getElementById('fix-description') as HTMLInputElement | null;
    void controller.resolve('fix', input?.value);
    return;
  }
  if (target.id === 'retry-button') {
    void controller.refresh();
  }
});

root.addEventListener('change', (ev) => {
  const target = ev.target as HTMLElement;
  if (target.id === 'match-select') {
    void controller.selectMatch((target as HTMLSelectElement).value);
  }
});

void controller.start();
