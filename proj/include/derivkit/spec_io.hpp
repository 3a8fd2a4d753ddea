#pragma once

// Reading manifold specs and writing/reading frame files. Both are JSON
// documents; numbers are written in shortest round-trip form.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "derivkit/derivation.hpp"
#include "derivkit/normal_frames.hpp"

namespace derivkit {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "derivkit 0.1.0";

struct ManifoldSpec {
  ChartPtr chart;
  FramePtr frame;
  std::optional<Derivation> derivation;
  std::map<std::string, VectorField> fields;
  std::map<std::string, CurveSpec> curves;
  // FNV-1a 64 of the raw document text, as 16 hex digits.
  std::string digest;

  const Derivation& d() const { return *derivation; }
  const VectorField& field(const std::string& name) const;
  const CurveSpec& curve(const std::string& name) const;
};

std::string fnv1a_digest(std::string_view bytes);

// Throws InputError naming the offending key; expression errors keep the
// parser's position.
ManifoldSpec parse_spec(const std::string& text);
ManifoldSpec load_spec(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

// "r=1,theta=0.5" (named, any order, every coordinate once) or "1,0.5".
Point parse_point(const std::string& text, const Chart& chart);
// "a,b;c,d" row by row.
Matrix parse_matrix(const std::string& text, std::size_t n);
// "21,21".
std::vector<std::size_t> parse_counts(const std::string& text);

Json matrix_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, std::size_t n);
Json point_json(const Point& p);

// Frame files: {kind, data, locus, verifier}. The reader ignores `verifier`.
struct SymbolicFrame {
  ExprMatrix matrix;
  Point x0;
  std::optional<std::string> field;
};

struct CurveFrameData {
  std::string curve;
  std::string field;
  std::vector<double> s;
  std::vector<Matrix> matrices;
};

struct GridFrameData {
  Lattice lattice;
  std::vector<std::size_t> base;
  std::vector<Matrix> matrices;
};

using FrameData = std::variant<SymbolicFrame, CurveFrameData, GridFrameData>;

Json frame_json(const SymbolicFrame& f);
Json frame_json(const CurveFrameData& f);
Json frame_json(const GridFrameData& f);

FrameData parse_frame(const std::string& text, const ManifoldSpec& spec);

}  // namespace derivkit
