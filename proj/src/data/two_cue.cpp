#include "occaug/data/two_cue.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "occaug/core/error.hpp"
#include "occaug/core/rng.hpp"

namespace occaug {
namespace {

constexpr double kBackground = 0.5;

std::vector<std::uint8_t> distinct_patterns(int classes, int cells, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(cells * cells);
  const std::size_t min_distance = n >= 9 ? 3 : 1;
  std::vector<std::uint8_t> out;
  for (int k = 0; k < classes; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100000) {
        throw DomainError("two_cue: cannot draw " + std::to_string(classes) +
                          " distinct " + std::to_string(cells) + "x" +
                          std::to_string(cells) + " patterns");
      }
      std::vector<std::uint8_t> p(n);
      std::size_t on = 0;
      for (auto& b : p) on += (b = rng.bernoulli(0.5) ? 1 : 0);
      if (on == 0 || on == n) continue;
      bool ok = true;
      for (int j = 0; j < k && ok; ++j) {
        std::size_t d = 0;
        for (std::size_t i = 0; i < n; ++i) d += p[i] != out[j * n + i];
        ok = d >= min_distance;
      }
      if (!ok) continue;
      out.insert(out.end(), p.begin(), p.end());
      break;
    }
  }
  return out;
}

/// Glyph intensity at pixel (i, j) of a size x size cue.
double glyph_value(const std::uint8_t* pattern, int cells, int size,
                   double contrast, int i, int j) {
  const int ci = i * cells / size;
  const int cj = j * cells / size;
  const bool on = pattern[ci * cells + cj] != 0;
  return kBackground + (on ? 0.5 : -0.5) * contrast;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct Sample {
  RawImage image;
  CueBox dominant, secondary;
};

Sample draw_sample(const TwoCueSpec& s, const TwoCueData& d, int label, Rng& rng) {
  const int side = s.image_side;
  Sample out;
  out.image = RawImage(3, side, side);

  const int corner = static_cast<int>(rng.uniform_int(0, 3));
  const int inset_y = static_cast<int>(rng.uniform_int(0, s.secondary_inset));
  const int inset_x = static_cast<int>(rng.uniform_int(0, s.secondary_inset));
  out.secondary.size = s.secondary_size;
  out.secondary.top = (corner & 1) ? side - s.secondary_size - inset_y : inset_y;
  out.secondary.left = (corner & 2) ? side - s.secondary_size - inset_x : inset_x;

  // Rejection sampling always terminates: violations() guarantees room on
  // the side opposite the secondary cue.
  out.dominant.size = s.dominant_size;
  for (;;) {
    out.dominant.top = static_cast<int>(rng.uniform_int(0, side - s.dominant_size));
    out.dominant.left = static_cast<int>(rng.uniform_int(0, side - s.dominant_size));
    const CueBox& a = out.dominant;
    const CueBox& b = out.secondary;
    const bool overlap = a.top < b.top + b.size && b.top < a.top + a.size &&
                         a.left < b.left + b.size && b.left < a.left + a.size;
    if (!overlap) break;
  }

  const auto dn = static_cast<std::size_t>(s.dominant_cells * s.dominant_cells);
  const auto sn = static_cast<std::size_t>(s.secondary_cells * s.secondary_cells);
  const std::uint8_t* dom = d.dominant_patterns.data() + static_cast<std::size_t>(label) * dn;
  const std::uint8_t* sec = d.secondary_patterns.data() + static_cast<std::size_t>(label) * sn;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      double base = kBackground;
      if (out.dominant.contains(i, j)) {
        base = glyph_value(dom, s.dominant_cells, s.dominant_size, s.dominant_contrast,
                           i - out.dominant.top, j - out.dominant.left);
      } else if (out.secondary.contains(i, j)) {
        base = glyph_value(sec, s.secondary_cells, s.secondary_size,
                           s.secondary_contrast, i - out.secondary.top,
                           j - out.secondary.left);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double noise = s.noise > 0.0 ? s.noise * rng.normal() : 0.0;
        out.image.at(c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
            quantize(base + noise);
      }
    }
  }
  return out;
}

void fill_split(const TwoCueSpec& s, TwoCueData& d, std::size_t count, Rng rng,
                LabeledDataset& ds, std::vector<CueBox>& dominant,
                std::vector<CueBox>& secondary) {
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(s.num_classes));
    Sample sample = draw_sample(s, d, label, rng);
    ds.add(sample.image, label);
    dominant.push_back(sample.dominant);
    secondary.push_back(sample.secondary);
  }
}

}  // namespace

std::vector<std::string> TwoCueSpec::violations() const {
  std::vector<std::string> v;
  if (num_classes < 2) v.push_back("two_cue.num_classes must be >= 2");
  if (image_side < 4) v.push_back("two_cue.image_side must be >= 4");
  if (dominant_cells < 1 || secondary_cells < 1) v.push_back("two_cue cue cells must be >= 1");
  if (dominant_size < 1 || dominant_size > image_side) v.push_back("two_cue.dominant_size must lie in [1, image_side]");
  if (secondary_size < 1) v.push_back("two_cue.secondary_size must be >= 1");
  if (dominant_cells > 0 && dominant_size % dominant_cells != 0) v.push_back("two_cue.dominant_size must be a multiple of dominant_cells");
  if (secondary_cells > 0 && secondary_size % secondary_cells != 0) v.push_back("two_cue.secondary_size must be a multiple of secondary_cells");
  if (secondary_inset < 0) v.push_back("two_cue.secondary_inset must be >= 0");
  if (!(dominant_contrast > secondary_contrast)) v.push_back("two_cue: dominant_contrast must exceed secondary_contrast");
  if (!(secondary_contrast > 0.0) || dominant_contrast > 1.0) v.push_back("two_cue contrasts must lie in (0, 1]");
  if (!(dominant_size > secondary_size)) v.push_back("two_cue: dominant_size must exceed secondary_size");
  if (noise < 0.0) v.push_back("two_cue.noise must be >= 0");
  if (dominant_size + secondary_size + secondary_inset > image_side) {
    v.push_back("two_cue: cues cannot be placed without overlap (dominant_size + "
                "secondary_size + secondary_inset exceeds image_side)");
  }
  if (num_classes > 0) {
    const auto k = static_cast<std::size_t>(num_classes);
    if (train_count == 0 || train_count % k != 0) v.push_back("two_cue.train_count must be a positive multiple of num_classes");
    if (val_count == 0 || val_count % k != 0) v.push_back("two_cue.val_count must be a positive multiple of num_classes");
  }
  return v;
}

TwoCueData generate_two_cue(const TwoCueSpec& spec, std::uint64_t seed) {
  if (auto v = spec.violations(); !v.empty()) throw ConfigError(std::move(v));
  Rng master(seed);
  TwoCueData d;
  d.dominant_patterns = distinct_patterns(spec.num_classes, spec.dominant_cells, master);
  d.secondary_patterns = distinct_patterns(spec.num_classes, spec.secondary_cells, master);
  const auto k = static_cast<std::size_t>(spec.num_classes);
  const auto side = static_cast<std::size_t>(spec.image_side);
  d.train = LabeledDataset(k, 3, side, side, Split::train);
  d.val = LabeledDataset(k, 3, side, side, Split::val);
  Rng train_rng = master.fork();
  Rng val_rng = master.fork();
  fill_split(spec, d, spec.train_count, train_rng, d.train, d.train_dominant, d.train_secondary);
  fill_split(spec, d, spec.val_count, val_rng, d.val, d.val_dominant, d.val_secondary);

  const ChannelStats stats = dataset_mean_std(d.train);
  for (double m : stats.mean) d.fill_colour.push_back(quantize(m));
  d.val_occluded = d.val;
  d.val_occluded.set_split(Split::val_occluded);
  for (std::size_t n = 0; n < d.val_occluded.size(); ++n) {
    auto px = d.val_occluded.mutable_pixels(n);
    const CueBox& b = d.val_dominant[n];
    for (std::size_t c = 0; c < 3; ++c) {
      for (int i = b.top; i < b.top + b.size; ++i) {
        for (int j = b.left; j < b.left + b.size; ++j) {
          px[(c * side + static_cast<std::size_t>(i)) * side + static_cast<std::size_t>(j)] =
              d.fill_colour[c];
        }
      }
    }
  }
  return d;
}

std::vector<double> render_dominant_glyph(const TwoCueData& data,
                                          const TwoCueSpec& spec, int label) {
  if (label < 0 || label >= spec.num_classes) throw DomainError("two_cue: label out of range");
  const auto n = static_cast<std::size_t>(spec.dominant_cells * spec.dominant_cells);
  const std::uint8_t* p = data.dominant_patterns.data() + static_cast<std::size_t>(label) * n;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(spec.dominant_size * spec.dominant_size));
  for (int i = 0; i < spec.dominant_size; ++i) {
    for (int j = 0; j < spec.dominant_size; ++j) {
      out.push_back(quantize(glyph_value(p, spec.dominant_cells, spec.dominant_size,
                                         spec.dominant_contrast, i, j)) / 255.0);
    }
  }
  return out;
}

std::string two_cue_manifest(const TwoCueSpec& spec, std::uint64_t seed,
                             const TwoCueData& data) {
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << seed << '\n'
     << "num_classes = " << spec.num_classes << '\n'
     << "image_side = " << spec.image_side << '\n'
     << "dominant_cells = " << spec.dominant_cells << '\n'
     << "dominant_size = " << spec.dominant_size << '\n'
     << "dominant_contrast = " << spec.dominant_contrast << '\n'
     << "secondary_cells = " << spec.secondary_cells << '\n'
     << "secondary_size = " << spec.secondary_size << '\n'
     << "secondary_contrast = " << spec.secondary_contrast << '\n'
     << "secondary_inset = " << spec.secondary_inset << '\n'
     << "noise = " << spec.noise << '\n'
     << "train.count = " << data.train.size() << '\n'
     << "val.count = " << data.val.size() << '\n'
     << "val_occluded.count = " << data.val_occluded.size() << '\n'
     << "fill_colour = " << int(data.fill_colour.at(0)) << ", "
     << int(data.fill_colour.at(1)) << ", " << int(data.fill_colour.at(2)) << '\n';
  return os.str();
}

}  // namespace occaug
