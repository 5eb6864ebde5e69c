/*
 * Copyright 2026 The evireg authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "evireg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "evireg/errors.hpp"

#include "json.hpp"

namespace evireg {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

namespace {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split name: " + s);
}

}  // namespace

void CorpusConfig::validate() const {
  if (pages_per_codex < 1) throw ConfigError("corpus: pages_per_codex must be >= 1");
  if (page_side < 1) throw ConfigError("corpus: page_side must be >= 1");
  if (patch_size < 3) throw ConfigError("corpus: patch_size must be >= 3");
  if (stride < 1) throw ConfigError("corpus: stride must be >= 1");
  if (codices.empty()) throw ConfigError("corpus: at least one codex required");
  const double fsum = split_fractions[0] + split_fractions[1] + split_fractions[2];
  if (std::fabs(fsum - 1.0) > 1e-9) {
    throw ConfigError("corpus: split fractions must sum to 1");
  }
  for (std::size_t i = 0; i < codices.size(); ++i) {
    const CodexSpec& a = codices[i];
    if (!(a.year_lo < a.year_hi)) {
      throw ConfigError("corpus: codex " + a.name + " has an empty year range");
    }
    for (std::size_t j = i + 1; j < codices.size(); ++j) {
      const CodexSpec& b = codices[j];
      if (a.year_lo < b.year_hi && b.year_lo < a.year_hi) {
        throw ConfigError("corpus: codex year ranges overlap: " + a.name + " and " + b.name);
      }
    }
  }
}

CorpusConfig default_corpus_config() {
  CorpusConfig c;
  // Style drift across each codex's year span is deliberately strong so a
  // century of script evolution is visible at the extractor's working
  // resolution.
  c.codices = {
      // Rounded minuscule: moderate strokes, strong curvature.
      {"carolmin", 820.0, 980.0,
       {6.0, 0.02, 1.55, 0.58, 42.0},
       {10.0, 0.12, 1.20, 0.36, 50.0}},
      // Light, slanted, airy hand: thin strokes, wide spacing, short lines.
      {"caroline", 1020.0, 1180.0,
       {3.4, 0.18, 2.40, 0.24, 26.0},
       {5.4, 0.32, 1.90, 0.14, 34.0}},
      // Heavy, dense, vertical strokes.
      {"textura", 1220.0, 1380.0,
       {11.5, -0.02, 1.15, 0.14, 54.0},
       {16.5, -0.12, 0.90, 0.05, 64.0}},
  };
  return c;
}

double label_for_year(double year, double century_offset) {
  const double k = std::floor((year + century_offset) / 100.0);
  return k * 100.0 - century_offset + 50.0;
}

StrokeStyle style_for_year(const CodexSpec& codex, double year) {
  const double u = (year - codex.year_lo) / (codex.year_hi - codex.year_lo);
  auto lerp = [u](double a, double b) { return a + (b - a) * u; };
  StrokeStyle s;
  s.width = lerp(codex.style_lo.width, codex.style_hi.width);
  s.slant = lerp(codex.style_lo.slant, codex.style_hi.slant);
  s.spacing = lerp(codex.style_lo.spacing, codex.style_hi.spacing);
  s.curvature = lerp(codex.style_lo.curvature, codex.style_hi.curvature);
  s.glyph_h = lerp(codex.style_lo.glyph_h, codex.style_hi.glyph_h);
  return s;
}

namespace {

// Bilinearly upsampled random grid; the parchment mottle and smudge fields.
struct ValueNoise {
  int cell;
  int grid_w;
  std::vector<double> values;

  ValueNoise(Rng& rng, int side, int cell_, double amp) : cell(cell_) {
    grid_w = side / cell + 2;
    values.resize(static_cast<std::size_t>(grid_w) * grid_w);
    for (double& v : values) v = rng.uniform(-amp, amp);
  }

  double at(int x, int y) const {
    const int gx = x / cell, gy = y / cell;
    const double fx = static_cast<double>(x % cell) / cell;
    const double fy = static_cast<double>(y % cell) / cell;
    const double a = values[static_cast<std::size_t>(gy) * grid_w + gx];
    const double b = values[static_cast<std::size_t>(gy) * grid_w + gx + 1];
    const double c = values[static_cast<std::size_t>(gy + 1) * grid_w + gx];
    const double d = values[static_cast<std::size_t>(gy + 1) * grid_w + gx + 1];
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
  }
};

void stamp_disk(std::vector<double>& buf, int side, double px, double py,
                double radius, double ink, double alpha) {
  const int x0 = std::max(0, static_cast<int>(px - radius - 1.0));
  const int x1 = std::min(side - 1, static_cast<int>(px + radius + 1.0));
  const int y0 = std::max(0, static_cast<int>(py - radius - 1.0));
  const int y1 = std::min(side - 1, static_cast<int>(py + radius + 1.0));
  for (int y = y0; y <= y1; ++y) {
    double* row = buf.data() + static_cast<std::size_t>(y) * side;
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - px, dy = y - py;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double cov = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (cov <= 0.0) continue;
      const double a = cov * alpha;
      row[x] = row[x] * (1.0 - a) + ink * a;
    }
  }
}

// Quadratic Bezier rendered as soft disk stamps spaced at ~radius/2.
// Fading erodes strokes: stamps drop out with probability skip_prob, so
// heavily faded script is broken and dotty while the surviving ink stays
// dark enough to pass the blank filter.
void draw_stroke(std::vector<double>& buf, int side, double x0, double y0,
                 double cx, double cy, double x1, double y1, double width,
                 double ink, double alpha, double skip_prob, Rng& rng) {
  const double chord = std::hypot(x1 - x0, y1 - y0) + std::hypot(cx - x0, cy - y0);
  const int steps = std::max(4, static_cast<int>(chord / std::max(0.8, width * 0.35)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const bool skip = skip_prob > 0.0 && rng.uniform() < skip_prob;
    if (skip) continue;
    const double mt = 1.0 - t;
    const double px = mt * mt * x0 + 2.0 * mt * t * cx + t * t * x1;
    const double py = mt * mt * y0 + 2.0 * mt * t * cy + t * t * y1;
    stamp_disk(buf, side, px, py, 0.5 * width, ink, alpha);
  }
}

}  // namespace

Page render_page(const CorpusConfig& config, int codex, int page_id,
                 double true_year, double fading, std::uint64_t seed,
                 int faded_quadrant) {
  const int side = config.page_side;
  Rng rng(seed);
  const StrokeStyle st = style_for_year(config.codices[static_cast<std::size_t>(codex)], true_year);

  // Parchment: warm base with low-frequency mottle and fine grain.
  std::vector<double> buf(static_cast<std::size_t>(side) * side);
  const double base = 212.0 + rng.uniform(-4.0, 4.0);
  ValueNoise mottle(rng, side, 61, 9.0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      buf[static_cast<std::size_t>(y) * side + x] =
          base + mottle.at(x, y) + rng.uniform(-3.0, 3.0);
    }
  }

  auto local_fade = [&](double x, double y) {
    double f = fading;
    if (faded_quadrant >= 0) {
      const int qx = x >= 0.5 * side ? 1 : 0;
      const int qy = y >= 0.5 * side ? 1 : 0;
      if (qy * 2 + qx == faded_quadrant) f = std::max(f, 0.85);
    }
    return f;
  };

  // Text block.
  const double margin = 0.06 * side;
  const double line_h = st.glyph_h * 1.45;
  const double gw = st.glyph_h * 0.62;
  for (double baseline = margin + st.glyph_h; baseline < side - margin; baseline += line_h) {
    double x = margin + rng.uniform(0.0, gw);
    while (x + gw < side - margin) {
      const int n_strokes = 2 + static_cast<int>(rng.below(2));
      const double ink = 42.0 + rng.uniform(-12.0, 12.0);
      for (int s = 0; s < n_strokes; ++s) {
        // Endpoints in the glyph box (y measured up from the baseline).
        const double ax = rng.uniform(0.0, gw), ay = rng.uniform(0.0, st.glyph_h);
        const double bx = rng.uniform(0.0, gw), by = rng.uniform(0.0, st.glyph_h);
        double mx = 0.5 * (ax + bx), my = 0.5 * (ay + by);
        const double deflect = st.curvature * st.glyph_h * rng.uniform(-1.0, 1.0);
        // Perpendicular deflection of the control point.
        const double len = std::hypot(bx - ax, by - ay) + 1e-9;
        mx += deflect * (by - ay) / len;
        my -= deflect * (bx - ax) / len;
        auto shear = [&](double gx, double gy) {
          return x + gx + st.slant * gy;  // x-shear by height above baseline
        };
        const double w = st.width * rng.uniform(0.90, 1.10);
        const double fade = local_fade(x, baseline);
        // Attenuation is bounded so surviving ink stays below the dark
        // threshold; the structural damage comes from stamp dropout.
        const double alpha = 0.92 * (1.0 - 0.45 * fade);
        draw_stroke(buf, side, shear(ax, ay), baseline - ay, shear(mx, my),
                    baseline - my, shear(bx, by), baseline - by, w, ink, alpha,
                    0.65 * fade, rng);
      }
      x += gw * st.spacing + rng.uniform(-1.5, 1.5);
    }
  }

  // Dark smudge stains: false ink blobs that mimic stroke density without
  // carrying script geometry. Candidates are accepted with the local fade
  // as probability; every candidate consumes the same rng draws either way
  // so the stream stays aligned.
  for (int b = 0; b < 24; ++b) {
    const double bx = rng.uniform(margin, side - margin);
    const double by = rng.uniform(margin, side - margin);
    const double r = rng.uniform(18.0, 55.0);
    const double stain = rng.uniform(95.0, 150.0);
    const double opacity = rng.uniform(0.25, 0.5);
    const double u = rng.uniform();
    if (u >= local_fade(bx, by)) continue;
    const int x0 = std::max(0, static_cast<int>(bx - r)), x1 = std::min(side - 1, static_cast<int>(bx + r));
    const int y0 = std::max(0, static_cast<int>(by - r)), y1 = std::min(side - 1, static_cast<int>(by + r));
    for (int y = y0; y <= y1; ++y) {
      double* row = buf.data() + static_cast<std::size_t>(y) * side;
      for (int xpx = x0; xpx <= x1; ++xpx) {
        const double d = std::hypot(xpx - bx, y - by);
        if (d >= r) continue;
        const double a = opacity * std::pow(1.0 - d / r, 1.5);
        row[xpx] = row[xpx] * (1.0 - a) + stain * a;
      }
    }
  }

  // Fading also smudges: low-frequency mottle plus grain, scaled by the
  // local fade level.
  ValueNoise smudge(rng, side, 37, 1.0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double f = local_fade(x, y);
      if (f <= 0.0) continue;
      double& v = buf[static_cast<std::size_t>(y) * side + x];
      v += 14.0 * f * smudge.at(x, y) + rng.uniform(-4.0, 4.0) * f;
    }
  }

  Page page;
  page.id = page_id;
  page.codex = codex;
  page.side = side;
  page.true_year = true_year;
  page.label_year = label_for_year(true_year, config.century_offset);
  page.fading = fading;
  page.pixels.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    page.pixels[i] = static_cast<std::uint8_t>(std::clamp(buf[i], 0.0, 255.0) + 0.5);
  }
  return page;
}

std::vector<Page> generate_corpus(const CorpusConfig& config) {
  config.validate();
  const Rng master = Rng(config.seed).derive("data");
  std::vector<Page> pages;
  pages.reserve(static_cast<std::size_t>(config.pages_per_codex) * config.codices.size());
  int page_id = 0;
  for (std::size_t c = 0; c < config.codices.size(); ++c) {
    const CodexSpec& codex = config.codices[c];
    // Century-bucket midpoints inside this codex's range: the anchors the
    // clustered page years gather around.
    std::vector<double> anchors;
    for (double m = std::floor(codex.year_lo / 100.0) * 100.0 + config.century_offset + 50.0;
         m < codex.year_hi; m += 100.0) {
      if (m >= codex.year_lo) anchors.push_back(m);
    }
    for (int p = 0; p < config.pages_per_codex; ++p, ++page_id) {
      Rng page_rng = master.derive("page", static_cast<std::uint64_t>(page_id));
      const double scatter_u = page_rng.uniform();
      const double scatter_year = page_rng.uniform(codex.year_lo, codex.year_hi);
      const std::size_t anchor_idx =
          anchors.empty() ? 0 : static_cast<std::size_t>(page_rng.below(anchors.size()));
      const double wiggle = config.year_anchor_sigma * page_rng.normal();
      double year;
      if (anchors.empty() || scatter_u < config.year_scatter_fraction) {
        year = scatter_year;
      } else {
        const double anchor = anchors[anchor_idx];
        // Stay inside both the anchor's bucket and the codex range so the
        // label remains the anchor.
        const double bucket_lo =
            std::floor((anchor - config.century_offset) / 100.0) * 100.0 +
            config.century_offset;
        const double lo = std::max(codex.year_lo, bucket_lo);
        const double hi = std::min(codex.year_hi, bucket_lo + 100.0) - 1e-9;
        year = std::clamp(anchor + wiggle, lo, hi);
      }
      const bool heavy = page_rng.uniform() < config.fading_heavy_fraction;
      const double draw = std::pow(page_rng.uniform(), config.fading_exponent);
      const double fading = heavy ? page_rng.uniform(config.fading_heavy_min, 1.0)
                                  : draw * config.fading_light_max;
      const std::uint64_t render_seed = page_rng.next_u64();
      pages.push_back(render_page(config, static_cast<int>(c), page_id, year,
                                  fading, render_seed));
    }
  }
  return pages;
}

std::vector<PatchRef> tile_page(const Page& page, int page_index, int size,
                                int stride, int first_patch_id) {
  std::vector<PatchRef> out;
  if (page.side < size) return out;  // caller warns
  const int per_axis = (page.side - size) / stride + 1;
  out.reserve(static_cast<std::size_t>(per_axis) * per_axis);
  int id = first_patch_id;
  for (int r = 0; r < per_axis; ++r) {
    for (int c = 0; c < per_axis; ++c) {
      PatchRef ref;
      ref.id = id++;
      ref.page_index = page_index;
      ref.row = r * stride;
      ref.col = c * stride;
      out.push_back(ref);
    }
  }
  return out;
}

std::vector<std::uint8_t> extract_patch(const Page& page, int row, int col, int size) {
  if (row < 0 || col < 0 || row + size > page.side || col + size > page.side) {
    throw ShapeError("extract_patch: window [" + std::to_string(row) + "," +
                     std::to_string(col) + "]+" + std::to_string(size) +
                     " outside page of side " + std::to_string(page.side));
  }
  std::vector<std::uint8_t> px(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const std::uint8_t* src =
        page.pixels.data() + static_cast<std::size_t>(row + y) * page.side + col;
    std::copy(src, src + size, px.data() + static_cast<std::size_t>(y) * size);
  }
  return px;
}

bool is_blank(const std::vector<std::uint8_t>& pixels, double dark_threshold,
              double blank_fraction) {
  std::size_t dark = 0;
  for (std::uint8_t p : pixels) {
    if (p < dark_threshold) ++dark;
  }
  const double frac = static_cast<double>(dark) / static_cast<double>(pixels.size());
  return frac < blank_fraction;
}

double laplacian_variance(const std::vector<std::uint8_t>& pixels, int size) {
  // kernel [[0,1,0],[1,-4,1],[0,1,0]], valid interior only
  double sum = 0.0, sum2 = 0.0;
  const std::int64_t n = static_cast<std::int64_t>(size - 2) * (size - 2);
  for (int y = 1; y + 1 < size; ++y) {
    const std::uint8_t* up = pixels.data() + static_cast<std::size_t>(y - 1) * size;
    const std::uint8_t* mid = pixels.data() + static_cast<std::size_t>(y) * size;
    const std::uint8_t* down = pixels.data() + static_cast<std::size_t>(y + 1) * size;
    for (int x = 1; x + 1 < size; ++x) {
      const double r = static_cast<double>(up[x]) + down[x] + mid[x - 1] + mid[x + 1] -
                       4.0 * mid[x];
      sum += r;
      sum2 += r * r;
    }
  }
  const double mean = sum / static_cast<double>(n);
  return sum2 / static_cast<double>(n) - mean * mean;
}

bool is_blurry(const std::vector<std::uint8_t>& pixels, int size, double threshold) {
  return laplacian_variance(pixels, size) < threshold;
}

std::vector<Split> split_documents(const std::vector<Page>& pages,
                                   const std::array<double, 3>& fractions,
                                   std::uint64_t seed) {
  const double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(fsum - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
  int max_codex = -1;
  for (const Page& p : pages) max_codex = std::max(max_codex, p.codex);
  std::vector<std::vector<std::size_t>> by_codex(static_cast<std::size_t>(max_codex + 1));
  for (std::size_t i = 0; i < pages.size(); ++i) {
    by_codex[static_cast<std::size_t>(pages[i].codex)].push_back(i);
  }

  int positive_parts = 0;
  for (double f : fractions) {
    if (f > 0.0) ++positive_parts;
  }

  std::vector<Split> out(pages.size(), Split::kTrain);
  const Rng master = Rng(seed).derive("split");
  for (std::size_t c = 0; c < by_codex.size(); ++c) {
    auto& ids = by_codex[c];
    if (ids.empty()) continue;
    const int n = static_cast<int>(ids.size());
    if (n < positive_parts) {
      throw ConfigError("split: codex " + std::to_string(c) + " has " +
                        std::to_string(n) + " pages, fewer than the " +
                        std::to_string(positive_parts) + " partitions");
    }
    // Largest-remainder rounding; ties resolved by partition order.
    int counts[3];
    double remainders[3];
    int assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = fractions[static_cast<std::size_t>(k)] * n;
      counts[k] = static_cast<int>(std::floor(exact));
      remainders[k] = exact - counts[k];
      assigned += counts[k];
    }
    while (assigned < n) {
      int best = 0;
      for (int k = 1; k < 3; ++k) {
        if (remainders[k] > remainders[best]) best = k;
      }
      ++counts[best];
      remainders[best] = -1.0;
      ++assigned;
    }
    Rng rng = master.derive("codex", static_cast<std::uint64_t>(c));
    rng.shuffle(ids);
    int cursor = 0;
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < counts[k]; ++i) {
        out[ids[static_cast<std::size_t>(cursor++)]] = static_cast<Split>(k);
      }
    }
  }
  return out;
}

Corpus build_corpus(const CorpusConfig& config) {
  Corpus corpus;
  corpus.config = config;
  corpus.pages = generate_corpus(config);
  corpus.page_split = split_documents(corpus.pages, config.split_fractions, config.seed);

  int next_id = 0;
  for (std::size_t pi = 0; pi < corpus.pages.size(); ++pi) {
    const Page& page = corpus.pages[pi];
    std::vector<PatchRef> refs =
        tile_page(page, static_cast<int>(pi), config.patch_size, config.stride, next_id);
    if (refs.empty()) {
      std::fprintf(stderr, "warning: page %d (side %d) smaller than patch size %d\n",
                   page.id, page.side, config.patch_size);
      continue;
    }
    next_id += static_cast<int>(refs.size());
    for (PatchRef& ref : refs) {
      const std::vector<std::uint8_t> px =
          extract_patch(page, ref.row, ref.col, config.patch_size);
      ref.blank = is_blank(px, config.dark_threshold, config.blank_fraction);
      ref.laplacian_var = laplacian_variance(px, config.patch_size);
      if (!ref.blank && ref.laplacian_var >= config.blur_threshold) {
        corpus.patches.push_back(ref);
      }
    }
  }
  return corpus;
}

void DegradationSpec::validate() const {
  switch (kind) {
    case DegradationKind::kNone:
      return;
    case DegradationKind::kBlur:
      if (!(param >= 0.0)) throw ConfigError("degrade: blur sigma must be >= 0");
      return;
    case DegradationKind::kLowContrast:
      if (!(param > 0.0 && param <= 1.0)) {
        throw ConfigError("degrade: contrast factor must lie in (0,1]");
      }
      return;
    case DegradationKind::kDctQuant:
      if (!(param > 0.0 && param <= 1.0)) {
        throw ConfigError("degrade: dct quality must lie in (0,1]");
      }
      return;
    case DegradationKind::kImpulse:
      if (!(param >= 0.0 && param <= 1.0)) {
        throw ConfigError("degrade: impulse fraction must lie in [0,1]");
      }
      return;
  }
}

std::vector<DegradationSpec> default_degradations() {
  return {
      {DegradationKind::kNone, 0.0, "Clean (baseline)"},
      {DegradationKind::kBlur, 1.0, "Blur (mild)"},
      {DegradationKind::kBlur, 3.0, "Blur (strong)"},
      {DegradationKind::kLowContrast, 0.4, "Low contrast"},
      {DegradationKind::kDctQuant, 0.6, "JPEG (mild)"},
      {DegradationKind::kDctQuant, 0.15, "JPEG (strong)"},
      {DegradationKind::kImpulse, 0.05, "Impulse noise"},
  };
}

namespace {

std::vector<std::uint8_t> gaussian_blur(const std::vector<std::uint8_t>& px, int size,
                                        double sigma) {
  if (sigma == 0.0) return px;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= ksum;

  auto clampi = [size](int v) { return std::clamp(v, 0, size - 1); };
  std::vector<double> tmp(px.size());
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               px[static_cast<std::size_t>(y) * size + clampi(x + i)];
      }
      tmp[static_cast<std::size_t>(y) * size + x] = acc;
    }
  }
  std::vector<std::uint8_t> out(px.size());
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp[static_cast<std::size_t>(clampi(y + i)) * size + x];
      }
      out[static_cast<std::size_t>(y) * size + x] =
          static_cast<std::uint8_t>(std::clamp(acc, 0.0, 255.0) + 0.5);
    }
  }
  return out;
}

std::vector<std::uint8_t> low_contrast(const std::vector<std::uint8_t>& px, double factor) {
  double mean = 0.0;
  for (std::uint8_t p : px) mean += p;
  mean /= static_cast<double>(px.size());
  std::vector<std::uint8_t> out(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = mean + factor * (px[i] - mean);
    out[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
  }
  return out;
}

// Blockwise 8x8 orthonormal DCT-II with a quality-scaled quantization step
// table: step(u,v) = (8 + 4(u+v)) / quality. Exercises the blocking and
// coefficient-loss artifact class without embedding a codec.
std::vector<std::uint8_t> dct_quantize(const std::vector<std::uint8_t>& px, int size,
                                       double quality) {
  static double T[8][8];
  static bool init = false;
  if (!init) {
    const double pi = 3.14159265358979323846264338327950288;
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        T[u][x] = cu * std::cos((2.0 * x + 1.0) * u * pi / 16.0);
      }
    }
    init = true;
  }
  std::vector<std::uint8_t> out(px.size());
  const int blocks = size / 8;
  double b[8][8], c[8][8], t[8][8];
  for (int by = 0; by < blocks; ++by) {
    for (int bx = 0; bx < blocks; ++bx) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          b[y][x] = px[static_cast<std::size_t>(by * 8 + y) * size + bx * 8 + x] - 128.0;
        }
      }
      // C = T b T^T
      for (int u = 0; u < 8; ++u) {
        for (int x = 0; x < 8; ++x) {
          double acc = 0.0;
          for (int y = 0; y < 8; ++y) acc += T[u][y] * b[y][x];
          t[u][x] = acc;
        }
      }
      for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
          double acc = 0.0;
          for (int x = 0; x < 8; ++x) acc += t[u][x] * T[v][x];
          const double step = (8.0 + 4.0 * (u + v)) / quality;
          c[u][v] = std::round(acc / step) * step;
        }
      }
      // b' = T^T c T
      for (int y = 0; y < 8; ++y) {
        for (int v = 0; v < 8; ++v) {
          double acc = 0.0;
          for (int u = 0; u < 8; ++u) acc += T[u][y] * c[u][v];
          t[y][v] = acc;
        }
      }
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          double acc = 0.0;
          for (int v = 0; v < 8; ++v) acc += t[y][v] * T[v][x];
          out[static_cast<std::size_t>(by * 8 + y) * size + bx * 8 + x] =
              static_cast<std::uint8_t>(std::clamp(acc + 128.0, 0.0, 255.0) + 0.5);
        }
      }
    }
  }
  // Edge strips when size is not a multiple of 8 pass through unchanged.
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (y < blocks * 8 && x < blocks * 8) continue;
      out[static_cast<std::size_t>(y) * size + x] = px[static_cast<std::size_t>(y) * size + x];
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> degrade(const std::vector<std::uint8_t>& pixels, int size,
                                  const DegradationSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case DegradationKind::kNone:
      return pixels;
    case DegradationKind::kBlur:
      return gaussian_blur(pixels, size, spec.param);
    case DegradationKind::kLowContrast:
      return low_contrast(pixels, spec.param);
    case DegradationKind::kDctQuant:
      return dct_quantize(pixels, size, spec.param);
    case DegradationKind::kImpulse: {
      std::vector<std::uint8_t> out = pixels;
      if (spec.param > 0.0) {
        for (std::uint8_t& p : out) {
          if (rng.uniform() < spec.param) p = rng.bernoulli(0.5) ? 255 : 0;
        }
      }
      return out;
    }
  }
  throw ConfigError("degrade: unknown kind");
}

namespace {

void write_pgm(const Page& page, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write page image: " + path);
  out << "P5\n" << page.side << " " << page.side << "\n255\n";
  out.write(reinterpret_cast<const char*>(page.pixels.data()),
            static_cast<std::streamsize>(page.pixels.size()));
}

void read_pgm(Page& page, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read page image: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w != h) {
    throw ConfigError("unsupported page image format: " + path);
  }
  in.get();  // single whitespace after header
  page.side = w;
  page.pixels.resize(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(page.pixels.data()),
          static_cast<std::streamsize>(page.pixels.size()));
  if (!in) throw ConfigError("truncated page image: " + path);
}

nlohmann::json corpus_config_to_json(const CorpusConfig& c) {
  nlohmann::json j;
  j["pages_per_codex"] = c.pages_per_codex;
  j["page_side"] = c.page_side;
  j["patch_size"] = c.patch_size;
  j["stride"] = c.stride;
  j["century_offset"] = c.century_offset;
  j["dark_threshold"] = c.dark_threshold;
  j["blank_fraction"] = c.blank_fraction;
  j["blur_threshold"] = c.blur_threshold;
  j["year_anchor_sigma"] = c.year_anchor_sigma;
  j["year_scatter_fraction"] = c.year_scatter_fraction;
  j["fading_heavy_fraction"] = c.fading_heavy_fraction;
  j["fading_heavy_min"] = c.fading_heavy_min;
  j["fading_light_max"] = c.fading_light_max;
  j["fading_exponent"] = c.fading_exponent;
  j["split_fractions"] = c.split_fractions;
  j["seed"] = c.seed;
  j["codices"] = nlohmann::json::array();
  for (const CodexSpec& s : c.codices) {
    nlohmann::json cj;
    cj["name"] = s.name;
    cj["year_lo"] = s.year_lo;
    cj["year_hi"] = s.year_hi;
    cj["style_lo"] = {s.style_lo.width, s.style_lo.slant, s.style_lo.spacing,
                      s.style_lo.curvature, s.style_lo.glyph_h};
    cj["style_hi"] = {s.style_hi.width, s.style_hi.slant, s.style_hi.spacing,
                      s.style_hi.curvature, s.style_hi.glyph_h};
    j["codices"].push_back(cj);
  }
  return j;
}

CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
  CorpusConfig c;
  c.pages_per_codex = j.at("pages_per_codex").get<int>();
  c.page_side = j.at("page_side").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.stride = j.at("stride").get<int>();
  c.century_offset = j.at("century_offset").get<double>();
  c.dark_threshold = j.at("dark_threshold").get<double>();
  c.blank_fraction = j.at("blank_fraction").get<double>();
  c.blur_threshold = j.at("blur_threshold").get<double>();
  c.year_anchor_sigma = j.at("year_anchor_sigma").get<double>();
  c.year_scatter_fraction = j.at("year_scatter_fraction").get<double>();
  c.fading_heavy_fraction = j.at("fading_heavy_fraction").get<double>();
  c.fading_heavy_min = j.at("fading_heavy_min").get<double>();
  c.fading_light_max = j.at("fading_light_max").get<double>();
  c.fading_exponent = j.at("fading_exponent").get<double>();
  c.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.codices.clear();
  for (const auto& cj : j.at("codices")) {
    CodexSpec s;
    s.name = cj.at("name").get<std::string>();
    s.year_lo = cj.at("year_lo").get<double>();
    s.year_hi = cj.at("year_hi").get<double>();
    const auto lo = cj.at("style_lo").get<std::vector<double>>();
    const auto hi = cj.at("style_hi").get<std::vector<double>>();
    s.style_lo = {lo[0], lo[1], lo[2], lo[3], lo[4]};
    s.style_hi = {hi[0], hi[1], hi[2], hi[3], hi[4]};
    c.codices.push_back(s);
  }
  return c;
}

std::string page_file_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pages/page_%04d.pgm", id);
  return buf;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "pages");

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = corpus_config_to_json(corpus.config);
  manifest["pages"] = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.pages.size(); ++i) {
    const Page& p = corpus.pages[i];
    const std::string file = page_file_name(p.id);
    write_pgm(p, (fs::path(dir) / file).string());
    nlohmann::json pj;
    pj["id"] = p.id;
    pj["codex"] = p.codex;
    pj["true_year"] = p.true_year;
    pj["label_year"] = p.label_year;
    pj["fading"] = p.fading;
    pj["split"] = to_string(corpus.page_split[i]);
    pj["file"] = file;
    manifest["pages"].push_back(pj);
  }
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw ConfigError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
  }

  const int psz = corpus.config.patch_size;
  std::ofstream bin(fs::path(dir) / "patches.bin", std::ios::binary);
  std::ofstream idx(fs::path(dir) / "patches.idx");
  if (!bin || !idx) throw ConfigError("cannot write patch files in " + dir);
  idx << "patch_id,page_id,codex,row,col,split,label_year,true_year,fading,"
         "laplacian_var,offset\n";
  std::uint64_t offset = 0;
  char line[256];
  for (const PatchRef& ref : corpus.patches) {
    const Page& page = corpus.pages[static_cast<std::size_t>(ref.page_index)];
    const std::vector<std::uint8_t> px = extract_patch(page, ref.row, ref.col, psz);
    bin.write(reinterpret_cast<const char*>(px.data()),
              static_cast<std::streamsize>(px.size()));
    std::snprintf(line, sizeof line, "%d,%d,%d,%d,%d,%s,%.10g,%.10g,%.10g,%.10g,%llu\n",
                  ref.id, page.id, page.codex, ref.row, ref.col,
                  to_string(corpus.page_split[static_cast<std::size_t>(ref.page_index)]).c_str(),
                  page.label_year, page.true_year, page.fading, ref.laplacian_var,
                  static_cast<unsigned long long>(offset));
    idx << line;
    offset += px.size();
  }
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw ConfigError("no corpus manifest in " + dir);
  nlohmann::json manifest;
  mf >> manifest;

  Corpus corpus;
  corpus.config = corpus_config_from_json(manifest.at("config"));
  for (const auto& pj : manifest.at("pages")) {
    Page page;
    page.id = pj.at("id").get<int>();
    page.codex = pj.at("codex").get<int>();
    page.true_year = pj.at("true_year").get<double>();
    page.label_year = pj.at("label_year").get<double>();
    page.fading = pj.at("fading").get<double>();
    read_pgm(page, (fs::path(dir) / pj.at("file").get<std::string>()).string());
    corpus.pages.push_back(std::move(page));
    corpus.page_split.push_back(split_from_string(pj.at("split").get<std::string>()));
  }

  std::ifstream idx(fs::path(dir) / "patches.idx");
  if (!idx) throw ConfigError("no patch index in " + dir);
  std::string line;
  std::getline(idx, line);  // header
  std::vector<int> page_index_by_id;
  for (std::size_t i = 0; i < corpus.pages.size(); ++i) {
    const int id = corpus.pages[i].id;
    if (id >= static_cast<int>(page_index_by_id.size())) {
      page_index_by_id.resize(static_cast<std::size_t>(id) + 1, -1);
    }
    page_index_by_id[static_cast<std::size_t>(id)] = static_cast<int>(i);
  }
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    PatchRef ref;
    int page_id = 0, codex = 0;
    char split_buf[16];
    double label = 0, yr = 0, fading = 0;
    unsigned long long off = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%d,%15[^,],%lf,%lf,%lf,%lf,%llu",
                    &ref.id, &page_id, &codex, &ref.row, &ref.col, split_buf, &label,
                    &yr, &fading, &ref.laplacian_var, &off) != 11) {
      throw ConfigError("malformed patch index line: " + line);
    }
    ref.page_index = page_index_by_id[static_cast<std::size_t>(page_id)];
    corpus.patches.push_back(ref);
  }
  return corpus;
}

}  // namespace evireg
