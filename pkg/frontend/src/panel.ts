/** Status panel DOM: iteration counter, confidence scores, Dice sparkline. */

export function renderIteration(el: HTMLElement, iteration: number): void {
  el.textContent = `iteration ${iteration}`;
  el.dataset.iteration = String(iteration);
}

/** One chip per candidate score; the selected (argmax) one is highlighted. */
export function renderScores(el: HTMLElement, scores: number[], selectedIndex: number | null): void {
  el.replaceChildren();
  scores.forEach((score, i) => {
    const chip = document.createElement('span');
    chip.className = 'score' + (i === selectedIndex ? ' selected' : '');
    chip.dataset.index = String(i);
    chip.textContent = score.toFixed(3);
    el.appendChild(chip);
  });
}

export function renderDice(el: HTMLElement, dice: number | null): void {
  el.textContent = dice === null ? 'dice: n/a' : `dice: ${dice.toFixed(4)}`;
  if (dice !== null) el.dataset.dice = dice.toFixed(4);
}

/** Inline SVG polyline of the per-iteration Dice history. */
export function renderSparkline(el: HTMLElement, history: number[], width = 120, height = 28): void {
  el.replaceChildren();
  if (history.length === 0) return;
  const svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
  svg.setAttribute('width', String(width));
  svg.setAttribute('height', String(height));
  const points = history
    .map((d, i) => {
      const x = history.length === 1 ? width / 2 : (i / (history.length - 1)) * (width - 4) + 2;
      const y = height - 2 - d * (height - 4);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(' ');
  const line = document.createElementNS('http://www.w3.org/2000/svg', 'polyline');
  line.setAttribute('points', points);
  line.setAttribute('fill', 'none');
  line.setAttribute('stroke', '#4fc3f7');
  line.setAttribute('stroke-width', '2');
  svg.appendChild(line);
  el.appendChild(svg);
}

export function showMessage(el: HTMLElement, text: string | null): void {
  el.textContent = text ?? '';
  el.classList.toggle('visible', text !== null);
}
