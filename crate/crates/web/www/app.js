import init, {
  augment_titles,
  generate_gallery,
  training_schedule,
  training_presets,
  noise_preview,
} from "./pkg/covergen_web.js";

const $ = (id) => document.getElementById(id);

function showError(id, err) {
  const el = $(id);
  el.hidden = !err;
  el.textContent = err ? String(err) : "";
}

function field(form, name) {
  return form.elements[name];
}

function renderCandidates(list) {
  const out = $("augment-out");
  out.replaceChildren();
  if (list.length === 0) {
    const li = document.createElement("li");
    li.textContent = "No replaceable words in this title.";
    out.append(li);
    return;
  }
  for (const c of list) {
    const li = document.createElement("li");
    c.tokens.forEach((tok, i) => {
      const span = document.createElement("span");
      span.className = `tok ${c.provenance[i]}`;
      span.title = c.provenance[i];
      span.textContent = tok;
      li.append(span, " ");
    });
    out.append(li);
  }
}

function onAugment(ev) {
  ev?.preventDefault();
  const f = $("augment-form");
  try {
    const json = augment_titles(
      field(f, "title").value,
      Number(field(f, "count").value),
      Number(field(f, "seed").value),
      field(f, "roundrobin").checked,
    );
    showError("augment-error", null);
    renderCandidates(JSON.parse(json));
  } catch (err) {
    showError("augment-error", err);
  }
}

function tile(cover, src) {
  const fig = document.createElement("figure");
  fig.className = cover.original ? "tile original" : "tile";
  const img = document.createElement("img");
  img.src = src;
  img.alt = cover.title;
  const cap = document.createElement("figcaption");
  const label = cover.original ? " (original)" : "";
  cap.innerHTML = `#${cover.rank} ${escapeHtml(cover.title)}${label}<br><span class="score">score ${cover.unconditional.toFixed(4)}</span>`;
  fig.append(img, cap);
  return fig;
}

function escapeHtml(s) {
  return s.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

function onGallery(ev) {
  ev?.preventDefault();
  const f = $("gallery-form");
  try {
    const json = generate_gallery(
      field(f, "title").value,
      Number(field(f, "variants").value),
      Number(field(f, "topk").value),
      Number(field(f, "seed").value),
      Date.now(),
    );
    showError("gallery-error", null);
    const { manifest, images } = JSON.parse(json);
    const kept = $("gallery-kept");
    const dropped = $("gallery-dropped");
    kept.replaceChildren();
    dropped.replaceChildren();
    manifest.covers.forEach((c, i) => (c.kept ? kept : dropped).append(tile(c, images[i])));
    $("gallery-dropped-wrap").hidden = dropped.children.length === 0;
    const nKept = kept.children.length;
    const warn = manifest.warnings.length ? ` ${manifest.warnings.join("; ")}` : "";
    $("gallery-summary").textContent =
      `${manifest.covers.length} covers, ${nKept} kept, ranked by discriminator score.${warn}`;
  } catch (err) {
    showError("gallery-error", err);
  }
}

function plot(points) {
  const canvas = $("lr-canvas");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 30;
  ctx.clearRect(0, 0, w, h);
  const maxLr = Math.max(...points.map((p) => p.lr));
  const x = (e) => pad + (e / Math.max(1, points.length - 1)) * (w - 2 * pad);
  const y = (lr) => h - pad - (lr / maxLr) * (h - 2 * pad);
  ctx.fillStyle = "#f3e0f7";
  for (const p of points) {
    if (!p.d_trained) ctx.fillRect(x(p.epoch), h - pad + 4, Math.max(1, (w - 2 * pad) / points.length), 6);
  }
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.strokeStyle = "#2a6";
  ctx.lineWidth = 2;
  ctx.beginPath();
  points.forEach((p, i) => (i ? ctx.lineTo(x(p.epoch), y(p.lr)) : ctx.moveTo(x(p.epoch), y(p.lr))));
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.font = "11px system-ui";
  ctx.fillText(`lr ${maxLr}`, pad + 4, pad - 8);
  ctx.fillText(`epoch ${points.length - 1}`, w - pad - 60, h - 6);
}

function onSchedule(ev) {
  ev?.preventDefault();
  const f = $("schedule-form");
  try {
    const s = JSON.parse(training_schedule(field(f, "preset").value, Number(field(f, "epochs").value)));
    showError("schedule-error", null);
    plot(s.points);
    const trained = s.points.filter((p) => p.d_trained).length;
    const last = s.points[s.points.length - 1];
    $("schedule-summary").textContent =
      `Discriminator trains on ${trained} of ${s.points.length} epochs; final lr ${last.lr}; noise sigma ${s.noise_sigma}.`;
    $("preset-json").textContent = JSON.stringify(s.preset, null, 2);
    const noise = $("noise-form");
    field(noise, "sigma").value = s.noise_sigma;
    onNoise();
  } catch (err) {
    showError("schedule-error", err);
  }
}

function onNoise() {
  const f = $("noise-form");
  const sigma = Number(field(f, "sigma").value);
  $("sigma-out").textContent = sigma.toFixed(2);
  try {
    $("noise-clean").src = noise_preview(field(f, "title").value, 0, 0);
    $("noise-noisy").src = noise_preview(field(f, "title").value, sigma, 0);
    showError("schedule-error", null);
  } catch (err) {
    showError("schedule-error", err);
  }
}

await init();
const select = field($("schedule-form"), "preset");
for (const name of JSON.parse(training_presets())) {
  select.append(new Option(name, name));
}
$("augment-form").addEventListener("submit", onAugment);
$("gallery-form").addEventListener("submit", onGallery);
$("schedule-form").addEventListener("submit", onSchedule);
$("noise-form").addEventListener("input", onNoise);
onAugment();
onGallery();
onSchedule();
