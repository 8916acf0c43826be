#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "srhm/grammar.hpp"

#include <json.hpp>

namespace srhm {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- grammar, versioned JSON -------------------------------------------------

nlohmann::json grammar_to_json(const RuleSet& rules);
RuleSet grammar_from_json(const nlohmann::json& j);
void save_grammar(const RuleSet& rules, const std::string& path);
RuleSet load_grammar(const std::string& path);

nlohmann::json params_to_json(const GrammarParams& g);
GrammarParams params_from_json(const nlohmann::json& j);

// ---- datasets ------------------------------------------------------------------
//
// Binary layout (little endian, see docs/formats.md):
//   magic "SRHMDAT1", u32 version, i32 n_c v m s L s0, u8 sparsity, u64 seed,
//   u64 count, u32 rows, u32 cols, then per sample a u16 label followed by
//   rows*cols bytes of the 0/1 matrix in row-major order.

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// JSON lines: one object per sample,
//   {"label": y, "rows": d, "cols": v, "ones": [[row, col], ...]}
// with `ones` listing the informative pixels in row-major order.
void save_dataset_jsonl(const Dataset& d, const std::string& path);
Dataset load_dataset_jsonl(const std::string& path);

// ---- little endian scalar helpers (shared with the checkpoint format) ---------

void write_u8(std::ostream& os, uint8_t x);
void write_u16(std::ostream& os, uint16_t x);
void write_u32(std::ostream& os, uint32_t x);
void write_u64(std::ostream& os, uint64_t x);
void write_i32(std::ostream& os, int32_t x);
void write_f32(std::ostream& os, float x);
void write_f64(std::ostream& os, double x);

uint8_t read_u8(std::istream& is);
uint16_t read_u16(std::istream& is);
uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
int32_t read_i32(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);

void write_magic(std::ostream& os, const char (&magic)[9]);
void expect_magic(std::istream& is, const char (&magic)[9]);

// atomic-ish text file write: temp file in the same directory, then rename
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace srhm
