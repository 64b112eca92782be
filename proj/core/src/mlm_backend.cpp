#include "fet/mlm_backend.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fet/errors.hpp"
#include "json.hpp"

namespace fet {
namespace {

using nlohmann::json;

constexpr int kStateFormatVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

TokenId Vocabulary::add(std::string_view word) {
  if (auto existing = find(word)) return *existing;
  const auto id = static_cast<TokenId>(words_.size());
  words_.emplace_back(word);
  index_.emplace(words_.back(), id);
  return id;
}

TokenId Vocabulary::add_special(std::string_view word) {
  const auto id = add(word);
  if (!is_special(id)) specials_.push_back(id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view word) const {
  if (auto found = find(word)) return *found;
  throw EncodeError("token '" + std::string(word) + "' is not in the backend vocabulary");
}

bool Vocabulary::is_special(TokenId id) const {
  return std::find(specials_.begin(), specials_.end(), id) != specials_.end();
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a("vocabulary");
  for (const auto& w : words_) {
    h = fnv1a(w, h);
    h = fnv1a(std::string_view("\0", 1), h);
  }
  for (auto id : specials_) h = fnv1a(std::to_string(id) + ",", h);
  return h;
}

ParameterBlock& EncoderState::block(std::string_view name) {
  for (auto& b : blocks)
    if (b.name == name) return b;
  throw ConfigError("encoder state has no parameter block '" + std::string(name) + "'");
}

const ParameterBlock& EncoderState::block(std::string_view name) const {
  return const_cast<EncoderState*>(this)->block(name);
}

std::size_t EncoderState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.values.size();
  return n;
}

void EncoderState::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);

  json meta;
  meta["format_version"] = kStateFormatVersion;
  meta["backend"] = backend;
  meta["version"] = version;
  meta["vocab_hash"] = hex64(vocabulary.hash());
  meta["vocab_size"] = vocabulary.size();
  json layout = json::array();
  for (const auto& b : blocks) layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  meta["blocks"] = layout;
  write_text(dir / "meta.json", meta.dump(2) + "\n");

  json vocab;
  vocab["words"] = vocabulary.words();
  vocab["special_ids"] = vocabulary.special_ids();
  write_text(dir / "vocab.json", vocab.dump(1) + "\n");

  std::ofstream out(dir / "weights.bin", std::ios::binary);
  if (!out) throw ConfigError("cannot write " + (dir / "weights.bin").string());
  for (const auto& b : blocks) {
    for (double v : b.values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
}

EncoderState EncoderState::load(const std::filesystem::path& dir) {
  EncoderState state;
  json meta;
  json vocab;
  try {
    meta = json::parse(read_text(dir / "meta.json"));
    vocab = json::parse(read_text(dir / "vocab.json"));
  } catch (const json::exception& e) {
    throw ConfigError("corrupt encoder state in " + dir.string() + ": " + e.what());
  }
  if (meta.value("format_version", 0) != kStateFormatVersion) {
    throw ConfigError("unsupported encoder state format in " + dir.string());
  }
  state.backend = meta.at("backend").get<std::string>();
  state.version = meta.at("version").get<std::string>();

  const auto specials = vocab.at("special_ids").get<std::vector<TokenId>>();
  for (const auto& w : vocab.at("words")) state.vocabulary.add(w.get<std::string>());
  for (auto id : specials) state.vocabulary.add_special(state.vocabulary.word(id));
  if (hex64(state.vocabulary.hash()) != meta.at("vocab_hash").get<std::string>()) {
    throw ConfigError("vocabulary hash mismatch in " + dir.string());
  }

  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) throw ConfigError("cannot open " + (dir / "weights.bin").string());
  for (const auto& entry : meta.at("blocks")) {
    ParameterBlock b;
    b.name = entry.at("name").get<std::string>();
    b.rows = entry.at("rows").get<std::size_t>();
    b.cols = entry.at("cols").get<std::size_t>();
    b.values.resize(b.rows * b.cols);
    for (auto& v : b.values) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw ConfigError("weights blob in " + dir.string() + " is truncated");
      }
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
      v = std::bit_cast<double>(bits);
    }
    state.blocks.push_back(std::move(b));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ConfigError("weights blob in " + dir.string() + " has trailing bytes");
  }
  return state;
}

StateGradient StateGradient::zeros_like(const EncoderState& state) {
  StateGradient g;
  g.blocks.reserve(state.blocks.size());
  for (const auto& b : state.blocks) g.blocks.emplace_back(b.values.size(), 0.0);
  return g;
}

void StateGradient::clear() {
  for (auto& b : blocks) std::fill(b.begin(), b.end(), 0.0);
}

double StateGradient::squared_norm() const {
  double s = 0.0;
  for (const auto& b : blocks)
    for (double v : b) s += v * v;
  return s;
}

void ensure_special_tokens(const MlmBackend& backend,
                           EncoderState& state,
                           const std::vector<std::string>& names,
                           std::uint64_t seed) {
  const bool all_present = std::all_of(names.begin(), names.end(), [&](const std::string& n) {
    auto id = state.vocabulary.find(n);
    return id && state.vocabulary.is_special(*id);
  });
  if (all_present) return;
  if (!backend.supports_token_registration()) {
    throw CapabilityError("backend '" + backend.kind() + "' cannot register new tokens");
  }
  backend.register_special_tokens(state, names, seed);
}

}  // namespace fet
