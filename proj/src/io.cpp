#include "gmf/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace gmf {

namespace {

constexpr std::size_t kRecordBytes = 20;

std::uint32_t load_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

float load_f32le(const unsigned char* p) {
  const std::uint32_t bits = load_u32le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void store_u32le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

void store_f32le(unsigned char* p, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  store_u32le(p, bits);
}

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file '" + path + "'");
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw IoError("failed reading '" + path + "'");
  return buf;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void validate_point(const std::string& path, std::size_t record, const LidarPoint& p,
                    std::uint32_t raw_ring) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.r))
    throw IoError("'" + path + "' record " + std::to_string(record) + ": non-finite coordinate");
  if (p.r < 0)
    throw IoError("'" + path + "' record " + std::to_string(record) + ": negative reflectance");
  if (raw_ring > 255)
    throw IoError("'" + path + "' record " + std::to_string(record) + ": ring index " +
                  std::to_string(raw_ring) + " exceeds 255");
}

PointCloud read_point_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "': empty CSV");
  // Tolerate trailing carriage returns.
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != "x,y,z,r,ring")
    throw IoError("'" + path + "': expected header 'x,y,z,r,ring', got '" + line + "'");
  PointCloud pc;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    double vals[4];
    for (int k = 0; k < 4; ++k) {
      if (!std::getline(row, field, ','))
        throw IoError("'" + path + "' line " + std::to_string(lineno) + ": expected 5 fields");
      try {
        vals[k] = std::stod(field);
      } catch (const std::exception&) {
        throw IoError("'" + path + "' line " + std::to_string(lineno) + ": bad numeric field '" +
                      field + "'");
      }
    }
    if (!std::getline(row, field, ','))
      throw IoError("'" + path + "' line " + std::to_string(lineno) + ": expected 5 fields");
    unsigned long ring = 0;
    try {
      ring = std::stoul(field);
    } catch (const std::exception&) {
      throw IoError("'" + path + "' line " + std::to_string(lineno) + ": bad ring field '" + field +
                    "'");
    }
    LidarPoint p{vals[0], vals[1], vals[2], vals[3], static_cast<std::uint32_t>(ring)};
    validate_point(path, pc.size(), p, static_cast<std::uint32_t>(ring));
    pc.push_back(p);
  }
  return pc;
}

}  // namespace

PointCloud read_point_cloud(const std::string& path) {
  if (has_suffix(path, ".csv")) return read_point_cloud_csv(path);
  const std::vector<unsigned char> buf = read_all(path);
  if (buf.size() % kRecordBytes != 0) {
    const std::size_t rem = buf.size() % kRecordBytes;
    throw IoError("'" + path + "': trailing " + std::to_string(rem) + " byte(s) at offset " +
                  std::to_string(buf.size() - rem));
  }
  PointCloud pc(buf.size() / kRecordBytes);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const unsigned char* rec = buf.data() + i * kRecordBytes;
    pc[i].x = load_f32le(rec);
    pc[i].y = load_f32le(rec + 4);
    pc[i].z = load_f32le(rec + 8);
    pc[i].r = load_f32le(rec + 12);
    const std::uint32_t ring = load_u32le(rec + 16);
    pc[i].ring = ring;
    validate_point(path, i, pc[i], ring);
  }
  return pc;
}

void write_point_cloud_binary(const std::string& path, const PointCloud& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file '" + path + "' for writing");
  std::vector<unsigned char> rec(kRecordBytes);
  for (const LidarPoint& p : points) {
    store_f32le(rec.data(), static_cast<float>(p.x));
    store_f32le(rec.data() + 4, static_cast<float>(p.y));
    store_f32le(rec.data() + 8, static_cast<float>(p.z));
    store_f32le(rec.data() + 12, static_cast<float>(p.r));
    store_u32le(rec.data() + 16, p.ring);
    out.write(reinterpret_cast<const char*>(rec.data()), kRecordBytes);
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_point_cloud_csv(const std::string& path, const PointCloud& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file '" + path + "' for writing");
  out << "x,y,z,r,ring\n";
  out.precision(9);
  for (const LidarPoint& p : points)
    out << p.x << "," << p.y << "," << p.z << "," << p.r << "," << p.ring << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

Tensor read_tensor_file(const std::string& path) {
  const std::vector<unsigned char> buf = read_all(path);
  if (buf.size() < 12)
    throw IoError("'" + path + "': too short for a 12-byte dims header (" +
                  std::to_string(buf.size()) + " bytes)");
  const std::size_t h = load_u32le(buf.data());
  const std::size_t w = load_u32le(buf.data() + 4);
  const std::size_t c = load_u32le(buf.data() + 8);
  const std::size_t expected = 12 + h * w * c * 4;
  if (buf.size() != expected)
    throw IoError("'" + path + "': dims " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                  std::to_string(c) + " require " + std::to_string(expected) + " bytes, file has " +
                  std::to_string(buf.size()));
  Tensor t(Shape{h, w, c});
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<double>(load_f32le(buf.data() + 12 + i * 4));
    if (!std::isfinite(t[i]))
      throw IoError("'" + path + "': non-finite value at flat index " + std::to_string(i));
  }
  return t;
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  if (t.rank() != 3) throw IoError("tensor files hold rank-3 tensors, got " + shape_str(t.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file '" + path + "' for writing");
  std::vector<unsigned char> buf(12 + t.numel() * 4);
  store_u32le(buf.data(), static_cast<std::uint32_t>(t.dim(0)));
  store_u32le(buf.data() + 4, static_cast<std::uint32_t>(t.dim(1)));
  store_u32le(buf.data() + 8, static_cast<std::uint32_t>(t.dim(2)));
  for (std::size_t i = 0; i < t.numel(); ++i)
    store_f32le(buf.data() + 12 + i * 4, static_cast<float>(t[i]));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace gmf
