#include "spikesplit/arch.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "spikesplit/error.hpp"

#ifndef SPIKESPLIT_DEFAULT_DATA_DIR
#define SPIKESPLIT_DEFAULT_DATA_DIR "data"
#endif

namespace spikesplit {

namespace {

using nlohmann::json;

constexpr int kArchVersion = 1;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

std::size_t positive(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw std::invalid_argument(where + ": missing '" + key + "'");
  const auto v = obj.at(key).get<long long>();
  if (v <= 0) throw std::invalid_argument(where + ": '" + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

std::size_t positive_or(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  return obj.contains(key) ? positive(obj, key, where) : fallback;
}

BlockSpec make_stem(const json& j, const Shape3& input) {
  reject_unknown_keys(j, {"out", "kernel", "stride", "padding", "tdbn"}, "stem");
  const std::size_t k = positive_or(j, "kernel", 3, "stem");
  const std::size_t s = positive_or(j, "stride", 1, "stem");
  const std::size_t p = j.contains("padding") ? j.at("padding").get<std::size_t>() : k / 2;
  BlockSpec b;
  b.kind = BlockKind::stem;
  b.name = "stem";
  b.input_shape = input;
  b.tdbn = j.value("tdbn", true);
  b.convs.push_back({input.c, positive(j, "out", "stem"), k, k, s, s, p, p, false, !b.tdbn});
  b.output_shape = b.convs.back().output_shape(input);
  return b;
}

BlockSpec make_residual(const Shape3& in, std::size_t mid, std::size_t out, std::size_t stride, std::string name) {
  BlockSpec b;
  b.kind = BlockKind::residual;
  b.name = std::move(name);
  b.input_shape = in;
  b.convs.push_back({in.c, mid, 1, 1, 1, 1, 0, 0});
  b.convs.push_back({mid, mid, 3, 3, stride, stride, 1, 1});
  b.convs.push_back({mid, out, 1, 1, 1, 1, 0, 0});
  Shape3 s = in;
  for (const auto& c : b.convs) s = c.output_shape(s);
  b.output_shape = s;
  if (stride != 1 || in.c != out) {
    b.shortcut = ConvSpec{in.c, out, 1, 1, stride, stride, 0, 0};
    if (b.shortcut->output_shape(in) != s) throw ShapeError(b.name + ": shortcut shape disagrees with main path");
  }
  return b;
}

BlockSpec make_separable(const Shape3& in, std::size_t out, std::size_t stride, std::string name) {
  BlockSpec b;
  b.kind = BlockKind::separable;
  b.name = std::move(name);
  b.input_shape = in;
  b.convs.push_back({in.c, in.c, 3, 3, stride, stride, 1, 1, true});
  b.convs.push_back({in.c, out, 1, 1, 1, 1, 0, 0});
  Shape3 s = in;
  for (const auto& c : b.convs) s = c.output_shape(s);
  b.output_shape = s;
  return b;
}

}  // namespace

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::stem: return "stem";
    case BlockKind::residual: return "residual";
    case BlockKind::separable: return "separable";
  }
  return "?";
}

std::vector<Shape3> BlockSpec::conv_inputs() const {
  std::vector<Shape3> inputs;
  Shape3 s = input_shape;
  for (const auto& c : convs) {
    inputs.push_back(s);
    s = c.output_shape(s);
  }
  if (shortcut) inputs.push_back(input_shape);
  return inputs;
}

std::uint64_t BlockSpec::macs() const {
  std::uint64_t total = 0;
  Shape3 s = input_shape;
  for (const auto& c : convs) {
    total += c.macs(s);
    s = c.output_shape(s);
  }
  if (shortcut) total += shortcut->macs(input_shape);
  return total;
}

void ArchitectureSpec::check_split(std::size_t split) const {
  if (split < 1 || split > blocks.size()) {
    throw std::out_of_range(name + ": split point " + std::to_string(split) + " outside 1.." +
                            std::to_string(blocks.size()));
  }
}

Shape3 ArchitectureSpec::split_shape(std::size_t split) const {
  check_split(split);
  return blocks[split - 1].output_shape;
}

ArchitectureSpec parse_arch(std::string_view text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("architecture file is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown_keys(j, {"schema", "version", "name", "id", "input", "classes", "lif", "stem", "blocks"},
                        "architecture");
    if (j.value("schema", std::string()) != "spikesplit.arch") {
      throw std::invalid_argument("architecture file must declare \"schema\": \"spikesplit.arch\"");
    }
    ArchitectureSpec a;
    a.version = j.at("version").get<int>();
    if (a.version != kArchVersion) {
      throw std::invalid_argument("unsupported architecture schema version " + std::to_string(a.version));
    }
    a.name = j.at("name").get<std::string>();
    a.id = j.at("id").get<std::uint16_t>();
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3 || in[0] == 0 || in[1] == 0 || in[2] == 0) {
      throw std::invalid_argument("'input' must be [C, H, W]");
    }
    a.input = {in[0], in[1], in[2]};
    a.classes = positive(j, "classes", "architecture");
    if (j.contains("lif")) {
      reject_unknown_keys(j.at("lif"), {"tau_decay", "v_th"}, "lif");
      a.lif.tau_decay = j.at("lif").value("tau_decay", a.lif.tau_decay);
      a.lif.v_th = j.at("lif").value("v_th", a.lif.v_th);
    }
    a.lif.validate();
    a.stem = make_stem(j.at("stem"), a.input);

    Shape3 shape = a.stem.output_shape;
    for (const auto& entry : j.at("blocks")) {
      const std::string kind = entry.at("kind").get<std::string>();
      const std::size_t repeat = positive_or(entry, "repeat", 1, "block");
      const std::size_t stride = positive_or(entry, "stride", 1, "block");
      for (std::size_t r = 0; r < repeat; ++r) {
        const std::size_t s = r == 0 ? stride : 1;
        std::string name = "block" + std::to_string(a.blocks.size() + 1);
        if (kind == "residual") {
          reject_unknown_keys(entry, {"kind", "mid", "out", "stride", "repeat"}, "residual block");
          a.blocks.push_back(make_residual(shape, positive(entry, "mid", "residual block"),
                                           positive(entry, "out", "residual block"), s, std::move(name)));
        } else if (kind == "separable") {
          reject_unknown_keys(entry, {"kind", "out", "stride", "repeat"}, "separable block");
          a.blocks.push_back(make_separable(shape, positive(entry, "out", "separable block"), s, std::move(name)));
        } else {
          throw std::invalid_argument("unknown block kind '" + kind + "'");
        }
        shape = a.blocks.back().output_shape;
      }
    }
    if (a.blocks.empty()) throw std::invalid_argument("architecture has no blocks");
    return a;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed architecture file: ") + e.what());
  }
}

ArchitectureSpec load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open architecture file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_arch(buf.str());
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("SPIKESPLIT_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return SPIKESPLIT_DEFAULT_DATA_DIR;
}

ArchitectureSpec build_arch(std::string_view name_or_path) {
  const std::filesystem::path as_path(name_or_path);
  if (as_path.has_extension() || as_path.has_parent_path()) return load_arch(as_path);
  const auto shipped = data_dir() / (std::string(name_or_path) + ".arch");
  if (!std::filesystem::exists(shipped)) {
    throw std::invalid_argument("unknown architecture '" + std::string(name_or_path) + "' (no " +
                                shipped.string() + ")");
  }
  return load_arch(shipped);
}

std::uint64_t prefix_flops(const ArchitectureSpec& arch, std::size_t split) {
  arch.check_split(split);
  std::uint64_t total = arch.stem.macs();
  for (std::size_t i = 0; i < split; ++i) total += arch.blocks[i].macs();
  return total;
}

std::vector<SplitPoint> enumerate_split_points(const ArchitectureSpec& arch) {
  std::vector<SplitPoint> points;
  points.reserve(arch.blocks.size());
  for (std::size_t i = 0; i < arch.blocks.size(); ++i) points.push_back({i + 1, arch.blocks[i].output_shape});
  return points;
}

bool channels_double_on_downsample(const ArchitectureSpec& arch) {
  for (const auto& b : arch.blocks) {
    const bool halved = b.output_shape.h * 2 == b.input_shape.h || b.output_shape.h * 2 == b.input_shape.h + 1;
    if (halved && b.output_shape.c != 2 * b.input_shape.c) return false;
  }
  return true;
}

}  // namespace spikesplit
