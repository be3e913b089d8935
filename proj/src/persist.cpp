// SPDX-License-Identifier: Apache-2.0
#include "psl/persist.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "psl/error.hpp"

namespace psl {

namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str16(const std::string& s, const char* what) {
    if (s.size() > 0xFFFF) throw ContractError(std::string(what) + " longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  std::string_view bytes(std::size_t n, const char* what) {
    if (remaining() < n) throw FormatError(std::string("truncated ") + what, b_.size());
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }
  double f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str16(const char* what) {
    const std::size_t n = u16(what);
    return std::string(bytes(n, what));
  }

 private:
  std::uint64_t le(int n, const char* what) {
    auto s = bytes(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  std::string_view b_;
  std::size_t pos_ = 0;
};

void expect_magic(Reader& r, const char (&magic)[4], const char* kind) {
  if (r.remaining() < 4 || std::memcmp(r.bytes(4, "magic").data(), magic, 4) != 0)
    throw FormatError(std::string("not a ") + kind + " file: bad magic", 0);
}

void expect_version(Reader& r, std::uint16_t known, const char* kind) {
  const std::size_t at = r.pos();
  const auto v = r.u16("version");
  if (v != known)
    throw FormatError(std::string("unsupported ") + kind + " version " + std::to_string(v) + " (expected " +
                          std::to_string(known) + ")",
                      at);
}

void expect_end(const Reader& r) {
  if (r.remaining() != 0) throw FormatError(std::to_string(r.remaining()) + " unexpected trailing bytes", r.pos());
}

}  // namespace

std::size_t slider_header_size(const ConceptSlider& slider) {
  return 4 + 2 + 4 + 1 + 3 * 4 + 2 + slider.name.size() + 2 + slider.target_token.size() + 8;
}

std::string encode_slider(const ConceptSlider& slider) {
  Writer w;
  w.bytes(std::string_view(kSliderMagic, 4));
  w.u16(kSliderVersion);
  w.u32(static_cast<std::uint32_t>(slider.dim()));
  w.u8(static_cast<std::uint8_t>(slider.kind));
  w.f32(slider.alpha_min);
  w.f32(slider.alpha_max);
  w.f32(slider.eta);
  w.str16(slider.name, "slider name");
  w.str16(slider.target_token, "target token");
  w.u64(slider.encoder_hash.value);
  for (double v : slider.embedding) w.f32(v);
  return w.take();
}

ConceptSlider decode_slider(std::string_view bytes) {
  Reader r(bytes);
  expect_magic(r, kSliderMagic, "slider");
  expect_version(r, kSliderVersion, "slider");
  ConceptSlider s;
  const std::uint32_t d = r.u32("dimension");
  const std::size_t kind_at = r.pos();
  const auto kind = r.u8("kind");
  if (kind > static_cast<std::uint8_t>(SliderKind::erasure))
    throw FormatError("unknown slider kind " + std::to_string(kind), kind_at);
  s.kind = static_cast<SliderKind>(kind);
  s.alpha_min = r.f32("alpha_min");
  s.alpha_max = r.f32("alpha_max");
  s.eta = r.f32("eta");
  s.name = r.str16("name");
  s.target_token = r.str16("target token");
  s.encoder_hash.value = r.u64("encoder hash");
  if (r.remaining() < std::size_t{4} * d) throw FormatError("truncated payload", bytes.size());
  s.embedding.resize(d);
  for (auto& v : s.embedding) v = r.f32("payload");
  expect_end(r);
  return s;
}

void save_slider(const ConceptSlider& slider, const std::filesystem::path& path) {
  write_file_atomic(path, encode_slider(slider));
}

ConceptSlider load_slider(const std::filesystem::path& path) { return decode_slider(read_file(path)); }

ConceptSlider load_slider(const std::filesystem::path& path, const PromptEncoder& encoder) {
  ConceptSlider s = load_slider(path);
  check_compatible(s, encoder);
  return s;
}

std::string encode_model(const DenoiserModel& model, const PromptEncoder& encoder, const NoiseSchedule& sched) {
  if (model.encoder_hash() != encoder.hash()) throw CompatibilityError("model was not trained with this encoder");
  if (model.num_timesteps() != sched.steps()) throw CompatibilityError("model and schedule disagree on T");
  Writer w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.u16(kModelVersion);
  w.u8(static_cast<std::uint8_t>(model.arch()));
  w.u8(model.frozen() ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(sched.steps()));
  w.u8(sched.spec().kind == BetaSpec::Kind::constant ? 0 : 1);
  w.f64(sched.spec().start);
  w.f64(sched.spec().end);
  w.u32(static_cast<std::uint32_t>(encoder.dim()));
  w.u64(encoder.seed());
  const auto& tokens = encoder.vocabulary().tokens();
  w.u32(static_cast<std::uint32_t>(tokens.size()));
  for (const auto& t : tokens) w.str16(t, "token");
  w.u64(encoder.hash().value);
  const auto& params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u8(static_cast<std::uint8_t>(p.shape().size()));
    for (auto extent : p.shape()) w.u32(static_cast<std::uint32_t>(extent));
    for (double v : p.values()) w.f64(v);
  }
  return w.take();
}

ModelBundle decode_model(std::string_view bytes) {
  Reader r(bytes);
  expect_magic(r, kModelMagic, "model");
  expect_version(r, kModelVersion, "model");
  const std::size_t arch_at = r.pos();
  const auto arch = r.u8("architecture");
  if (arch > static_cast<std::uint8_t>(Arch::model_b))
    throw FormatError("unknown architecture " + std::to_string(arch), arch_at);
  const bool frozen = r.u8("frozen flag") != 0;
  const auto steps = r.u32("schedule length");
  const std::size_t kind_at = r.pos();
  const auto kind = r.u8("schedule kind");
  if (kind > 1) throw FormatError("unknown schedule kind " + std::to_string(kind), kind_at);
  BetaSpec spec;
  spec.kind = kind == 0 ? BetaSpec::Kind::constant : BetaSpec::Kind::linear;
  spec.start = r.f64("beta start");
  spec.end = r.f64("beta end");
  const auto dim = r.u32("dimension");
  const auto seed = r.u64("encoder seed");
  const auto n_tokens = r.u32("token count");
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(r.str16("token"));
  const std::size_t hash_at = r.pos();
  const EncoderHash stored{r.u64("encoder hash")};
  const auto n_params = r.u32("parameter count");
  std::vector<Tensor> params;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const auto rank = r.u8("tensor rank");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      shape.push_back(r.u32("tensor extent"));
      numel *= shape.back();
    }
    if (r.remaining() / 8 < numel) throw FormatError("truncated parameter data", bytes.size());
    std::vector<double> values(numel);
    for (auto& v : values) v = r.f64("parameter data");
    params.push_back(Tensor::from(std::move(shape), std::move(values)));
  }
  expect_end(r);

  PromptEncoder encoder = PromptEncoder::build(Vocabulary(std::move(tokens), dim), seed);
  if (encoder.hash() != stored)
    throw FormatError("stored encoder hash " + stored.hex() + " does not match rebuilt encoder " +
                          encoder.hash().hex(),
                      hash_at);
  NoiseSchedule sched = make_schedule(static_cast<int>(steps), spec);
  DenoiserModel model = DenoiserModel::from_parameters(static_cast<Arch>(arch), dim, static_cast<int>(steps),
                                                       encoder.hash(), std::move(params), frozen);
  return {std::move(model), std::move(encoder), std::move(sched)};
}

void save_model(const DenoiserModel& model, const PromptEncoder& encoder, const NoiseSchedule& sched,
                const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(model, encoder, sched));
}

ModelBundle load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// Manifest values are escaped so every entry stays on one line.
namespace {

std::string escape(std::string_view v) {
  std::string out;
  for (char c : v) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else if (c == '\r') out += "\\r";
    else out += c;
  }
  return out;
}

std::string unescape(std::string_view v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '\\' && i + 1 < v.size()) {
      const char n = v[++i];
      out += n == 'n' ? '\n' : n == 'r' ? '\r' : n;
    } else {
      out += v[i];
    }
  }
  return out;
}

}  // namespace

std::string RunManifest::to_text() const {
  std::ostringstream o;
  o << "format=psl-manifest-1\n";
  o << "command=" << escape(command) << '\n';
  for (std::size_t i = 0; i < argv.size(); ++i) o << "argv." << i << '=' << escape(argv[i]) << '\n';
  for (const auto& [k, v] : config) o << "config." << k << '=' << escape(v) << '\n';
  o << "seed=" << seed << '\n';
  for (const auto& [p, h] : inputs) o << "input." << escape(p) << '=' << h << '\n';
  for (const auto& [p, h] : outputs) o << "output." << escape(p) << '=' << h << '\n';
  o << "exit_code=" << exit_code << '\n';
  if (!error.empty()) o << "error=" << escape(error) << '\n';
  o << "duration_seconds=" << std::fixed << std::setprecision(3) << duration_seconds << '\n';
  return o.str();
}

RunManifest RunManifest::parse(std::string_view text) {
  RunManifest m;
  std::map<std::size_t, std::string> args;
  bool saw_format = false;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(offset, end - offset);
    const std::size_t line_at = offset;
    offset = end + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("manifest line without '='", line_at);
    const std::string key = unescape(line.substr(0, eq));
    const std::string value = unescape(line.substr(eq + 1));
    auto starts = [&](std::string_view p) { return key.rfind(p, 0) == 0; };
    try {
      if (key == "format") {
        if (value != "psl-manifest-1") throw FormatError("unsupported manifest format '" + value + "'", line_at);
        saw_format = true;
      } else if (key == "command") {
        m.command = value;
      } else if (starts("argv.")) {
        args[std::stoul(key.substr(5))] = value;
      } else if (starts("config.")) {
        m.config.emplace_back(key.substr(7), value);
      } else if (key == "seed") {
        m.seed = std::stoull(value);
      } else if (starts("input.")) {
        m.inputs[key.substr(6)] = value;
      } else if (starts("output.")) {
        m.outputs[key.substr(7)] = value;
      } else if (key == "exit_code") {
        m.exit_code = std::stoi(value);
      } else if (key == "error") {
        m.error = value;
      } else if (key == "duration_seconds") {
        m.duration_seconds = std::stod(value);
      }
    } catch (const std::logic_error&) {
      throw FormatError("bad manifest value for '" + key + "'", line_at);
    }
  }
  if (!saw_format) throw FormatError("missing manifest format line", 0);
  std::size_t expect = 0;
  for (auto& [i, a] : args) {
    if (i != expect++) throw FormatError("manifest argv indices are not contiguous", 0);
    m.argv.push_back(std::move(a));
  }
  return m;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, manifest.to_text());
}

RunManifest load_manifest(const std::filesystem::path& path) { return RunManifest::parse(read_file(path)); }

}  // namespace psl
