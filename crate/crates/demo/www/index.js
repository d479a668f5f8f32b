import init, { bleu_breakdown, explore_beam, protocol_matrix } from "./pkg/nbest_demo.js";

const $ = (id) => document.getElementById(id);

function esc(s) {
  return String(s).replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function table(head, rows) {
  const th = head.map((h) => `<th>${esc(h)}</th>`).join("");
  return `<table><tr>${th}</tr>${rows.join("")}</table>`;
}

function show(target, json, render) {
  const out = JSON.parse(json);
  $(target).innerHTML = out.error ? `<p class="error">${esc(out.error)}</p>` : render(out);
}

const num = (form, name) => Number(form.elements[name].value);

function renderBleu(r) {
  const rows = r.orders.map(
    (o) => `<tr><td>${o.order}</td><td>${o.matches}</td><td>${o.total}</td><td>${o.precision.toFixed(4)}</td></tr>`,
  );
  return (
    table(["n", "matches", "total", "precision"], rows) +
    `<p>length ${r.hyp_len} / ${r.ref_len}, brevity penalty ${r.brevity_penalty.toFixed(4)}, ` +
    `BLEU <b>${(100 * r.bleu).toFixed(2)}</b></p>`
  );
}

function renderBeam(r) {
  const rows = r.entries.map(
    (e) =>
      `<tr class="${e.oracle ? "oracle" : ""}"><td>${e.rank}</td><td class="text">${esc(e.tokens)}</td>` +
      `<td>${e.score.toFixed(3)}</td><td>${e.normalized.toFixed(3)}</td><td>${(100 * e.sentence_bleu).toFixed(1)}</td></tr>`,
  );
  return (
    `<p>source <code>${esc(r.source)}</code><br>reference <code>${esc(r.reference)}</code></p>` +
    table(["rank", "hypothesis", "log p", "normalized", "BLEU"], rows) +
    `<p>greedy: <code>${esc(r.greedy)}</code> (${r.greedy_score.toFixed(3)})` +
    (r.search_error ? ", beam found a better-scoring output" : ", same score as the beam 1-best") +
    `. The shaded row is the oracle.</p>`
  );
}

function renderMatrix(r) {
  const rows = r.rows.map((row, i) => {
    const cells = r.cells[i]
      .map((v, j) => `<td class="${r.marked[i][j] ? "marked" : ""}">${v.toFixed(2)}${r.marked[i][j] ? "*" : ""}</td>`)
      .join("");
    return `<tr><th>${esc(row)}</th>${cells}<td>${r.oracle[i].toFixed(2)}</td></tr>`;
  });
  const attr = r.attribution.map(
    (a) =>
      `<tr><td>${esc(a.scorer)}</td><td>${esc(a.other)}</td><td>${(100 * a.search_error).toFixed(1)}%</td>` +
      `<td>${(100 * a.model_preference).toFixed(1)}%</td><td>${(100 * a.tie).toFixed(1)}%</td></tr>`,
  );
  return (
    table(["n-best \\ model", ...r.columns, "Oracle"], rows) +
    table(["scorer", "vs list", "search error", "model preference", "tie"], attr)
  );
}

function bind(formId, run) {
  $(formId).addEventListener("submit", (ev) => {
    ev.preventDefault();
    run(ev.target);
  });
}

await init();
$("status").textContent = "ready";

bind("bleu-form", (f) =>
  show("bleu-out", bleu_breakdown(f.elements.hyp.value, f.elements.ref.value, num(f, "order"), f.elements.smoothed.checked), renderBleu),
);
bind("beam-form", (f) =>
  show(
    "beam-out",
    explore_beam(BigInt(num(f, "seed")), num(f, "train"), num(f, "sentence"), num(f, "beam"), num(f, "nbest"), num(f, "alpha")),
    renderBeam,
  ),
);
bind("matrix-form", (f) => {
  $("matrix-out").textContent = "running...";
  setTimeout(
    () =>
      show(
        "matrix-out",
        protocol_matrix(BigInt(num(f, "seed")), num(f, "strong"), num(f, "weak"), num(f, "test"), num(f, "nbest")),
        renderMatrix,
      ),
    0,
  );
});
