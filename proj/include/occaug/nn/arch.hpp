#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace occaug {

enum class ArchName { mini_plain, mini_skip };

std::string_view to_string(ArchName name);
ArchName parse_arch_name(std::string_view text);

enum class LayerKind {
  conv,
  batch_norm,
  relu,
  max_pool,
  global_avg_pool,
  flatten,
  linear,
  skip_save,  // stashes the current activation under its own name
  skip_join,  // adds the stash named by `source`
};

struct InputSize {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
};

struct LayerDesc {
  LayerKind kind;
  std::string name;
  std::size_t in = 0;   // channels (conv/bn) or features (linear)
  std::size_t out = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  std::string source;   // skip_join only

  // Output activation shape per sample; height/width are 1 after flatten
  // or global average pooling.
  std::size_t out_channels = 0;
  std::size_t out_height = 0;
  std::size_t out_width = 0;
};

/// Layer table of one of the two desk-scale architectures.
///
/// MiniPlain (width w): conv1(3->w) relu1 pool1 conv2(w->2w) relu2 pool2
/// conv3(2w->4w) relu3 pool3 flatten fc. No batch norm, no skips.
///
/// MiniSkip (width w): stem.conv stem.bn stem.relu stem.pool, then three
/// stages at constant width w. Each stage is
///   [stageN.pool] stageN.skip stageN.conv1 stageN.bn1 stageN.relu1
///   stageN.conv2 stageN.bn2 stageN.join stageN.relu2
/// where stageN.join adds the stageN.skip activation (identity shortcut) and
/// stages 2 and 3 start with a 2x2 max pool. A global average pool (gap) and
/// fc close the net.
///
/// All convolutions are 3x3, stride 1, padding 1; all pools are 2x2 stride 2.
struct ArchSpec {
  ArchName name = ArchName::mini_skip;
  InputSize input;
  std::size_t num_classes = 10;
  std::size_t width = 16;
  std::vector<LayerDesc> layers;

  static ArchSpec make(ArchName name, InputSize input, std::size_t num_classes,
                       std::size_t width = 16);

  const LayerDesc* find(std::string_view layer) const;
  /// Every name accepted by forward hooks: "input" plus all layer names.
  std::vector<std::string> hookable_layers() const;
  std::size_t parameter_count() const;
};

enum class RegularizerKind { none, dropout, spatial_dropout, drop_block };

std::string_view to_string(RegularizerKind kind);
RegularizerKind parse_regularizer_kind(std::string_view text);

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::none;
  double p_keep = 1.0;
  int block_size = 3;
  /// Layer names after which the regularizer runs. For MiniSkip,
  /// "stageN.skip" regularizes the shortcut branch before the join.
  std::vector<std::string> placement;

  friend bool operator==(const RegularizerSpec&, const RegularizerSpec&) = default;

  /// After every convolution of the last two stages (MiniSkip) or the last
  /// two convolutions (MiniPlain); DropBlock also covers the shortcuts.
  static std::vector<std::string> default_placement(ArchName arch,
                                                    RegularizerKind kind);
};

}  // namespace occaug
