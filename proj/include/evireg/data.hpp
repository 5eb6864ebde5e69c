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

#ifndef EVIREG_DATA_HPP_
#define EVIREG_DATA_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "evireg/rng.hpp"

namespace evireg {

// One manuscript page of the synthetic corpus.
struct Page {
  int id = 0;
  int codex = 0;
  int side = 0;  // square, pixels
  std::vector<std::uint8_t> pixels;
  double true_year = 0.0;
  double label_year = 0.0;  // century-bucket midpoint containing true_year
  double fading = 0.0;      // [0,1], latent aleatoric control
};

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

std::string to_string(Split s);

// Grid window of a page; quality stats are filled by the admission filters.
struct PatchRef {
  int id = 0;
  int page_index = 0;  // position in Corpus::pages
  int row = 0, col = 0;
  double laplacian_var = 0.0;
  bool blank = false;
};

// Stroke geometry at one year; every component is linear in the year within
// its codex, width increasing, so the generator has a monotone probe
// statistic.
struct StrokeStyle {
  double width;
  double slant;      // radians of x-shear
  double spacing;    // glyph advance, in units of glyph width
  double curvature;  // control-point deflection, fraction of glyph size
  double glyph_h;
};

struct CodexSpec {
  std::string name;
  double year_lo = 0.0, year_hi = 0.0;
  StrokeStyle style_lo, style_hi;
};

// Page years cluster near the century-bucket midpoints inside each codex
// range (manuscripts are dated to circa-century precision), with a scatter
// fraction spread uniformly across the range.


struct CorpusConfig {
  int pages_per_codex = 20;
  int page_side = 1232;
  int patch_size = 224;
  int stride = 112;
  std::vector<CodexSpec> codices;
  // Century buckets are [k*100 + offset, (k+1)*100 + offset); offset 0
  // gives midpoints at x50 and every default codex straddles a boundary,
  // so labels vary within a codex. offset 50 centers buckets on multiples
  // of 100 (single label per default codex: 900, 1000, 1300).
  double century_offset = 0.0;
  double dark_threshold = 128.0;
  double blank_fraction = 0.03;
  double blur_threshold = 80.0;
  // Fading distribution: a heavily-damaged fraction drawn uniformly from
  // [fading_heavy_min, 1], the rest light with density uniform^exponent
  // scaled to [0, fading_light_max].
  double fading_heavy_fraction = 0.25;
  double fading_heavy_min = 0.65;
  double fading_light_max = 0.6;
  double fading_exponent = 1.6;
  double year_anchor_sigma = 10.0;    // spread of the clustered page years
  double year_scatter_fraction = 0.30;
  std::array<double, 3> split_fractions = {0.70, 0.15, 0.15};
  std::uint64_t seed = 0;

  void validate() const;
};

// Three codices over the year ranges 850-950, 960-1020 and 1275-1325 CE.
CorpusConfig default_corpus_config();

// Midpoint of the 100-year bucket [k*100 + offset, (k+1)*100 + offset)
// containing `year`.
double label_for_year(double year, double century_offset);

struct Corpus {
  CorpusConfig config;
  std::vector<Page> pages;
  std::vector<Split> page_split;   // aligned with pages
  std::vector<PatchRef> patches;   // admitted patches only
};

// Render one page: parchment texture, pseudo-glyph stroke lines in the
// codex style at true_year, multiplicative ink fading plus additive smudge.
// faded_quadrant in 0..3 restricts an extra heavy fade to one quadrant
// (used by the spatial-map analysis); -1 disables it.
Page render_page(const CorpusConfig& config, int codex, int page_id,
                 double true_year, double fading, std::uint64_t seed,
                 int faded_quadrant = -1);

StrokeStyle style_for_year(const CodexSpec& codex, double year);

// Deterministic page set: per-page seeds derive from (seed, page index).
std::vector<Page> generate_corpus(const CorpusConfig& config);

// All grid-aligned windows; count per axis is floor((side-size)/stride)+1.
// Pages smaller than the window yield an empty list.
std::vector<PatchRef> tile_page(const Page& page, int page_index, int size,
                                int stride, int first_patch_id);

std::vector<std::uint8_t> extract_patch(const Page& page, int row, int col, int size);

// Blank: fraction of pixels darker than dark_threshold is below
// blank_fraction (strict).
bool is_blank(const std::vector<std::uint8_t>& pixels, double dark_threshold,
              double blank_fraction);

// Variance of the 5-point Laplacian over the valid interior.
double laplacian_variance(const std::vector<std::uint8_t>& pixels, int size);
bool is_blurry(const std::vector<std::uint8_t>& pixels, int size, double threshold);

// Document-level split, stratified per codex, largest-remainder rounding,
// deterministic per seed. Throws when a codex has fewer pages than
// partitions.
std::vector<Split> split_documents(const std::vector<Page>& pages,
                                   const std::array<double, 3>& fractions,
                                   std::uint64_t seed);

// generate + tile + filter + split.
Corpus build_corpus(const CorpusConfig& config);

enum class DegradationKind { kNone, kBlur, kLowContrast, kDctQuant, kImpulse };

struct DegradationSpec {
  DegradationKind kind = DegradationKind::kNone;
  double param = 0.0;  // sigma / contrast factor / quality / pixel fraction
  std::string label;   // report row name

  void validate() const;
};

// The evaluation suite rows: clean baseline, blur mild/strong, low
// contrast, blockwise DCT quantization mild/strong (the JPEG artifact
// class), impulse noise.
std::vector<DegradationSpec> default_degradations();

// Pure given the rng stream; output stays within [0,255].
std::vector<std::uint8_t> degrade(const std::vector<std::uint8_t>& pixels, int size,
                                  const DegradationSpec& spec, Rng& rng);

// On-disk corpus layout under `dir`:
//   manifest.json  config echo + one record per page (id, codex, true/label
//                  year, fading, file path)
//   pages/page_<id>.pgm  binary 8-bit PGM (P5)
//   patches.bin    admitted patches, raw grayscale bytes, patch i at offset
//                  i * patch_size^2
//   patches.idx    CSV: patch_id,page_id,codex,row,col,split,label_year,
//                  true_year,fading,laplacian_var,offset
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace evireg

#endif  // EVIREG_DATA_HPP_
