#include "amrec/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

using nlohmann::json;

void write_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& is, double* p, std::size_t n,
                  const std::string& path) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(is.gcount()) != n * sizeof(double)) {
    throw ValidationError("truncated payload in " + path);
  }
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw ValidationError("cannot open: " + path);
  return f;
}

json parse_json(const std::string& text, const std::string& where) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed JSON in " + where);
  return j;
}

json geometry_to_json(const Geometry& g) {
  return json{{"image_size", g.image_size},
              {"n_views", g.n_views},
              {"n_detectors", g.n_detectors},
              {"detector_spacing", g.detector_spacing}};
}

Geometry geometry_from_json(const json& j, const std::string& where) {
  Geometry g;
  try {
    g.image_size = j.at("image_size").get<std::size_t>();
    g.n_views = j.at("n_views").get<std::size_t>();
    g.n_detectors = j.at("n_detectors").get<std::size_t>();
    g.detector_spacing = j.at("detector_spacing").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad geometry record: " + e.what());
  }
  return g;
}

// Number formatting that round-trips doubles exactly through text.
std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace

void save_tensor(const std::string& path, const Tensor& t,
                 const std::string& kind, const Geometry& geom) {
  if (kind.empty()) throw ValidationError("save_tensor: kind tag required");
  {
    std::ofstream f = open_out(path, true);
    write_doubles(f, t.data(), t.size());
    if (!f) throw ValidationError("write failed: " + path);
  }
  json sidecar{{"shape", t.shape()}, {"kind", kind},
               {"geometry", geometry_to_json(geom)}};
  std::ofstream f = open_out(path + ".json", false);
  f << sidecar.dump(2) << "\n";
  if (!f) throw ValidationError("write failed: " + path + ".json");
}

StoredTensor load_tensor(const std::string& path) {
  const std::string side_path = path + ".json";
  std::string text;
  {
    std::ifstream f = open_in(side_path, false);
    std::ostringstream os;
    os << f.rdbuf();
    text = os.str();
  }
  json sidecar = parse_json(text, side_path);

  StoredTensor out;
  std::vector<std::size_t> shape;
  try {
    shape = sidecar.at("shape").get<std::vector<std::size_t>>();
    out.kind = sidecar.at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(side_path + ": bad sidecar: " + e.what());
  }
  if (!sidecar.contains("geometry")) {
    throw ValidationError(side_path + ": sidecar lacks geometry");
  }
  out.geom = geometry_from_json(sidecar["geometry"], side_path);

  out.values = Tensor(shape);
  std::ifstream f = open_in(path, true);
  read_doubles(f, out.values.data(), out.values.size(), path);
  char extra;
  if (f.read(&extra, 1)) {
    throw ValidationError("trailing bytes in " + path);
  }
  ensure_finite(out.values, "load_tensor " + path);
  return out;
}

void write_pgm(const std::string& path, const Tensor& image) {
  if (image.rank() != 2) throw ValidationError("write_pgm: rank-2 image required");
  ensure_finite(image, "write_pgm");
  double lo = image[0], hi = image[0];
  for (std::size_t i = 0; i < image.size(); ++i) {
    lo = std::min(lo, image[i]);
    hi = std::max(hi, image[i]);
  }
  const double span = hi - lo;

  std::ofstream f = open_out(path, true);
  f << "P5\n" << image.extent(1) << " " << image.extent(0) << "\n65535\n";
  for (std::size_t i = 0; i < image.size(); ++i) {
    double v = span > 0.0 ? (image[i] - lo) / span : 0.0;
    const auto q = static_cast<std::uint32_t>(std::lround(v * 65535.0));
    const auto s = static_cast<std::uint16_t>(std::min<std::uint32_t>(q, 65535));
    const char bytes[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xff)};
    f.write(bytes, 2);
  }
  if (!f) throw ValidationError("write failed: " + path);
}

namespace {

// Reads one whitespace-delimited PGM header token, skipping # comments.
std::string pgm_token(std::istream& is, const std::string& path) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw ValidationError("truncated PGM header in " + path);
  return tok;
}

} // namespace

PgmImage read_pgm(const std::string& path) {
  std::ifstream f = open_in(path, true);
  if (pgm_token(f, path) != "P5") {
    throw ValidationError(path + ": not a binary PGM");
  }
  PgmImage img;
  img.cols = std::stoul(pgm_token(f, path));
  img.rows = std::stoul(pgm_token(f, path));
  const unsigned long maxval = std::stoul(pgm_token(f, path));
  if (maxval != 65535) {
    throw ValidationError(path + ": expected 16-bit maxval 65535");
  }
  // The single whitespace byte after maxval was consumed by the tokenizer.
  img.pixels.resize(img.rows * img.cols);
  std::vector<char> raw(img.pixels.size() * 2);
  f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(f.gcount()) != raw.size()) {
    throw ValidationError("truncated PGM payload in " + path);
  }
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto hi = static_cast<std::uint8_t>(raw[2 * i]);
    const auto lo = static_cast<std::uint8_t>(raw[2 * i + 1]);
    img.pixels[i] = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return img;
}

namespace {

json stack_header(const LayerStack& stack) {
  json layers = json::array();
  for (const ConvLayer& layer : stack.layers) {
    layers.push_back(json{{"shape", layer.kernel.shape()},
                          {"delta", layer.delta}});
  }
  return json{{"layers", std::move(layers)},
              {"final_linear", stack.final_linear}};
}

void append_stack_payload(std::ostream& os, const LayerStack& stack) {
  for (const ConvLayer& layer : stack.layers) {
    write_doubles(os, layer.kernel.data(), layer.kernel.size());
  }
}

LayerStack stack_from_header(const json& header, std::istream& payload,
                             const std::string& path) {
  LayerStack stack;
  try {
    stack.final_linear = header.at("final_linear").get<bool>();
    for (const json& jl : header.at("layers")) {
      const auto shape = jl.at("shape").get<std::vector<std::size_t>>();
      const double delta = jl.at("delta").get<double>();
      Tensor kernel(shape);
      read_doubles(payload, kernel.data(), kernel.size(), path);
      stack.layers.push_back(make_conv_layer(std::move(kernel), delta));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad stack header: " + e.what());
  }
  return stack;
}

// Header line plus the rest of the stream positioned at the payload.
json read_header_line(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line)) {
    throw ValidationError("missing header line in " + path);
  }
  return parse_json(line, path);
}

} // namespace

void save_layer_stack(const std::string& path, const LayerStack& stack,
                      const std::string& role) {
  if (stack.layers.empty()) {
    throw ValidationError("save_layer_stack: empty stack");
  }
  json header = stack_header(stack);
  header["format"] = "layer-stack";
  if (!role.empty()) header["role"] = role;
  std::ofstream f = open_out(path, true);
  f << header.dump() << "\n";
  append_stack_payload(f, stack);
  if (!f) throw ValidationError("write failed: " + path);
}

StoredStack load_layer_stack(const std::string& path) {
  std::ifstream f = open_in(path, true);
  json header = read_header_line(f, path);
  if (header.value("format", "") != "layer-stack") {
    throw ValidationError(path + ": not a layer-stack file");
  }
  StoredStack out;
  out.role = header.value("role", "");
  out.stack = stack_from_header(header, f, path);
  return out;
}

void save_advance_map(const std::string& path, const ViewAdvanceMap& map) {
  validate_advance_map(map);
  json header;
  header["format"] = "advance-map";
  header["kind"] = map.kind == AdvanceKind::interpolation ? "interpolation"
                                                          : "convolutional";
  header["rate"] = map.rate;
  if (map.kind == AdvanceKind::convolutional) {
    header["use_skip"] = map.use_skip;
    json blocks = json::array();
    for (const LayerStack& block : map.blocks) {
      blocks.push_back(stack_header(block));
    }
    header["blocks"] = std::move(blocks);
  }
  std::ofstream f = open_out(path, true);
  f << header.dump() << "\n";
  if (map.kind == AdvanceKind::convolutional) {
    for (const LayerStack& block : map.blocks) {
      append_stack_payload(f, block);
    }
  }
  if (!f) throw ValidationError("write failed: " + path);
}

ViewAdvanceMap load_advance_map(const std::string& path) {
  std::ifstream f = open_in(path, true);
  json header = read_header_line(f, path);
  if (header.value("format", "") != "advance-map") {
    throw ValidationError(path + ": not an advance-map file");
  }
  ViewAdvanceMap map;
  try {
    map.rate = header.at("rate").get<std::size_t>();
    const std::string kind = header.at("kind").get<std::string>();
    if (kind == "interpolation") {
      map.kind = AdvanceKind::interpolation;
    } else if (kind == "convolutional") {
      map.kind = AdvanceKind::convolutional;
      map.use_skip = header.at("use_skip").get<bool>();
      for (const json& jb : header.at("blocks")) {
        map.blocks.push_back(stack_from_header(jb, f, path));
      }
    } else {
      throw ValidationError(path + ": unknown advance map kind: " + kind);
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad advance map header: " + e.what());
  }
  validate_advance_map(map);
  return map;
}

void write_trace_csv(const std::string& path,
                     const std::vector<IterationRecord>& trace) {
  std::ofstream f = open_out(path, false);
  f << "k,eps,phi_eps,phi,grad_norm,branch,linesearch_count,reduced\n";
  for (const IterationRecord& r : trace) {
    f << r.k << "," << fmt_double(r.eps) << "," << fmt_double(r.phi_eps) << ","
      << fmt_double(r.phi) << "," << fmt_double(r.grad_norm) << ","
      << branch_name(r.branch) << "," << r.linesearch_count << ","
      << (r.reduced ? 1 : 0) << "\n";
  }
  if (!f) throw ValidationError("write failed: " + path);
}

std::vector<IterationRecord> read_trace_csv(const std::string& path) {
  std::ifstream f = open_in(path, false);
  std::string line;
  if (!std::getline(f, line) ||
      line != "k,eps,phi_eps,phi,grad_norm,branch,linesearch_count,reduced") {
    throw ValidationError(path + ": unexpected trace header");
  }
  std::vector<IterationRecord> trace;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields.size() != 8) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected 8 fields";
      throw ValidationError(os.str());
    }
    try {
      IterationRecord r;
      r.k = std::stoul(fields[0]);
      r.eps = std::stod(fields[1]);
      r.phi_eps = std::stod(fields[2]);
      r.phi = std::stod(fields[3]);
      r.grad_norm = std::stod(fields[4]);
      r.branch = branch_from_name(fields[5]);
      r.linesearch_count = std::stoul(fields[6]);
      if (fields[7] != "0" && fields[7] != "1") {
        throw ValidationError("reduced flag must be 0 or 1");
      }
      r.reduced = fields[7] == "1";
      trace.push_back(r);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << path << ":" << line_no << ": bad trace row: " << e.what();
      throw ValidationError(os.str());
    }
  }
  return trace;
}

} // namespace amrec
