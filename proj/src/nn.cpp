#include "srhm/nn.hpp"

namespace srhm {

const char* to_string(ArchKind k) {
  switch (k) {
    case ArchKind::LCN: return "lcn";
    case ArchKind::CNN: return "cnn";
    case ArchKind::FCN: return "fcn";
  }
  throw NetError("bad arch kind");
}

ArchKind arch_from_string(const std::string& s) {
  if (s == "lcn") return ArchKind::LCN;
  if (s == "cnn") return ArchKind::CNN;
  if (s == "fcn") return ArchKind::FCN;
  throw NetError("unknown architecture: " + s);
}

void ArchitectureSpec::validate() const {
  if (levels < 1) throw NetError("levels must be >= 1");
  if (int(widths.size()) != levels) throw NetError("widths size != levels");
  for (int w : widths)
    if (w < 1) throw NetError("widths must be positive");
  if (input_positions < 1 || input_channels < 1 || n_classes < 1)
    throw NetError("input dims and n_classes must be positive");
  if (conv_like()) {
    if (filter < 1) throw NetError("filter must be >= 1");
    int64_t n = 1;
    for (int k = 0; k < levels; ++k) {
      n *= filter;
      if (n > input_positions) break;
    }
    if (n != input_positions)
      throw NetError("input_positions must equal filter^levels");
  }
}

ArchitectureSpec spec_for_grammar(const GrammarParams& g, ArchKind kind,
                                  int width, Scaling scaling) {
  ArchitectureSpec s;
  s.kind = kind;
  s.levels = g.L;
  s.filter = g.patch_width();
  s.widths.assign(g.L, width);
  s.input_positions = int(g.input_dim());
  s.input_channels = g.v;
  s.n_classes = g.n_c;
  s.scaling = scaling;
  s.validate();
  return s;
}

}  // namespace srhm
