#include "srhm/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace srhm {

using nlohmann::json;

// ---- little endian helpers ---------------------------------------------------

namespace {

template <typename T>
void write_le(std::ostream& os, T x) {
  unsigned char buf[sizeof(T)];
  uint64_t bits;
  if constexpr (sizeof(T) == 4 && std::is_floating_point_v<T>) {
    uint32_t b;
    std::memcpy(&b, &x, 4);
    bits = b;
  } else if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    std::memcpy(&bits, &x, 8);
  } else {
    bits = uint64_t(std::make_unsigned_t<T>(x));
  }
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = (bits >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw IoError("unexpected end of file");
  uint64_t bits = 0;
  for (size_t i = 0; i < sizeof(T); ++i) bits |= uint64_t(buf[i]) << (8 * i);
  if constexpr (sizeof(T) == 4 && std::is_floating_point_v<T>) {
    uint32_t b = uint32_t(bits);
    T x;
    std::memcpy(&x, &b, 4);
    return x;
  } else if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    T x;
    std::memcpy(&x, &bits, 8);
    return x;
  } else {
    return T(bits);
  }
}

}  // namespace

void write_u8(std::ostream& os, uint8_t x) { write_le(os, x); }
void write_u16(std::ostream& os, uint16_t x) { write_le(os, x); }
void write_u32(std::ostream& os, uint32_t x) { write_le(os, x); }
void write_u64(std::ostream& os, uint64_t x) { write_le(os, x); }
void write_i32(std::ostream& os, int32_t x) { write_le(os, x); }
void write_f32(std::ostream& os, float x) { write_le(os, x); }
void write_f64(std::ostream& os, double x) { write_le(os, x); }

uint8_t read_u8(std::istream& is) { return read_le<uint8_t>(is); }
uint16_t read_u16(std::istream& is) { return read_le<uint16_t>(is); }
uint32_t read_u32(std::istream& is) { return read_le<uint32_t>(is); }
uint64_t read_u64(std::istream& is) { return read_le<uint64_t>(is); }
int32_t read_i32(std::istream& is) { return read_le<int32_t>(is); }
float read_f32(std::istream& is) { return read_le<float>(is); }
double read_f64(std::istream& is) { return read_le<double>(is); }

void write_magic(std::ostream& os, const char (&magic)[9]) {
  os.write(magic, 8);
}

void expect_magic(std::istream& is, const char (&magic)[9]) {
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0)
    throw IoError(std::string("bad magic, want ") + magic);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp);
    os.write(content.data(), std::streamsize(content.size()));
    if (!os) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---- grammar JSON -------------------------------------------------------------

json params_to_json(const GrammarParams& g) {
  return json{{"n_c", g.n_c},          {"v", g.v},
              {"m", g.m},              {"s", g.s},
              {"L", g.L},              {"s0", g.s0},
              {"sparsity", to_string(g.sparsity)},
              {"seed", g.seed}};
}

GrammarParams params_from_json(const json& j) {
  GrammarParams g;
  g.n_c = j.at("n_c").get<int>();
  g.v = j.at("v").get<int>();
  g.m = j.at("m").get<int>();
  g.s = j.at("s").get<int>();
  g.L = j.at("L").get<int>();
  g.s0 = j.at("s0").get<int>();
  g.sparsity = sparsity_from_string(j.at("sparsity").get<std::string>());
  g.seed = j.at("seed").get<uint64_t>();
  return g;
}

json grammar_to_json(const RuleSet& rules) {
  const auto& g = rules.params;
  json levels = json::array();
  for (int l = 1; l <= g.L; ++l) {
    json parents = json::array();
    for (int p = 0; p < rules.parents_at(l); ++p) {
      json rs = json::array();
      for (int r = 0; r < g.m; ++r) {
        auto tup = rules.rule(l, p, r);
        rs.push_back(std::vector<int32_t>(tup.begin(), tup.end()));
      }
      parents.push_back(std::move(rs));
    }
    levels.push_back(std::move(parents));
  }
  return json{{"format", "srhm-grammar"},
              {"version", 1},
              {"params", params_to_json(g)},
              {"tables", std::move(levels)}};
}

RuleSet grammar_from_json(const json& j) {
  if (j.value("format", "") != "srhm-grammar")
    throw IoError("not a grammar file");
  if (j.value("version", 0) != 1) throw IoError("unsupported grammar version");
  RuleSet rs;
  rs.params = params_from_json(j.at("params"));
  const auto& levels = j.at("tables");
  if (int(levels.size()) != rs.params.L) throw IoError("bad level count");
  rs.tables.resize(rs.params.L);
  for (int l = 1; l <= rs.params.L; ++l) {
    const auto& parents = levels[l - 1];
    auto& t = rs.tables[l - 1];
    t.reserve(parents.size() * rs.params.m * rs.params.s);
    for (const auto& rules_of_parent : parents) {
      if (int(rules_of_parent.size()) != rs.params.m)
        throw IoError("bad rule count");
      for (const auto& tup : rules_of_parent) {
        if (int(tup.size()) != rs.params.s) throw IoError("bad tuple size");
        for (const auto& c : tup) t.push_back(c.get<int32_t>());
      }
    }
  }
  rs.rebuild_inverse();  // validates
  return rs;
}

void save_grammar(const RuleSet& rules, const std::string& path) {
  write_file_atomic(path, grammar_to_json(rules).dump(2) + "\n");
}

RuleSet load_grammar(const std::string& path) {
  return grammar_from_json(json::parse(read_file(path)));
}

// ---- dataset binary -----------------------------------------------------------

static constexpr char kDataMagic[9] = "SRHMDAT1";

void save_dataset(const Dataset& d, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp);
    const auto& g = d.params;
    write_magic(os, kDataMagic);
    write_u32(os, 1);
    write_i32(os, g.n_c);
    write_i32(os, g.v);
    write_i32(os, g.m);
    write_i32(os, g.s);
    write_i32(os, g.L);
    write_i32(os, g.s0);
    write_u8(os, uint8_t(g.sparsity));
    write_u64(os, g.seed);
    write_u64(os, d.xs.size());
    uint32_t rows = d.xs.empty() ? uint32_t(g.input_dim()) : d.xs[0].rows;
    uint32_t cols = d.xs.empty() ? uint32_t(g.v) : d.xs[0].cols;
    write_u32(os, rows);
    write_u32(os, cols);
    for (size_t i = 0; i < d.xs.size(); ++i) {
      if (d.ys[i] < 0 || d.ys[i] > 0xffff) throw IoError("label out of range");
      write_u16(os, uint16_t(d.ys[i]));
      const auto& x = d.xs[i];
      if (uint32_t(x.rows) != rows || uint32_t(x.cols) != cols)
        throw IoError("ragged dataset");
      os.write(reinterpret_cast<const char*>(x.data.data()),
               std::streamsize(x.data.size()));
    }
    if (!os) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  expect_magic(is, kDataMagic);
  if (read_u32(is) != 1) throw IoError("unsupported dataset version");
  Dataset d;
  auto& g = d.params;
  g.n_c = read_i32(is);
  g.v = read_i32(is);
  g.m = read_i32(is);
  g.s = read_i32(is);
  g.L = read_i32(is);
  g.s0 = read_i32(is);
  g.sparsity = Sparsity(read_u8(is));
  g.seed = read_u64(is);
  uint64_t count = read_u64(is);
  uint32_t rows = read_u32(is);
  uint32_t cols = read_u32(is);
  d.xs.reserve(count);
  d.ys.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    d.ys.push_back(read_u16(is));
    InputMatrix x{int32_t(rows), int32_t(cols)};
    is.read(reinterpret_cast<char*>(x.data.data()),
            std::streamsize(x.data.size()));
    if (!is) throw IoError("unexpected end of file");
    d.xs.push_back(std::move(x));
  }
  return d;
}

// ---- dataset JSON lines ---------------------------------------------------------

void save_dataset_jsonl(const Dataset& d, const std::string& path) {
  std::ostringstream os;
  for (size_t i = 0; i < d.xs.size(); ++i) {
    const auto& x = d.xs[i];
    json ones = json::array();
    for (int32_t r = 0; r < x.rows; ++r)
      for (int32_t c = 0; c < x.cols; ++c)
        if (x.at(r, c)) ones.push_back(json::array({r, c}));
    json line{{"label", d.ys[i]},
              {"rows", x.rows},
              {"cols", x.cols},
              {"ones", std::move(ones)}};
    os << line.dump() << "\n";
  }
  write_file_atomic(path, os.str());
}

Dataset load_dataset_jsonl(const std::string& path) {
  std::istringstream is(read_file(path));
  Dataset d;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    InputMatrix x(j.at("rows").get<int32_t>(), j.at("cols").get<int32_t>());
    for (const auto& rc : j.at("ones"))
      x.at(rc[0].get<int32_t>(), rc[1].get<int32_t>()) = 1;
    d.xs.push_back(std::move(x));
    d.ys.push_back(j.at("label").get<int32_t>());
  }
  return d;
}

}  // namespace srhm
