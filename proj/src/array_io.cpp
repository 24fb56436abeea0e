#include "metadg/array_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace metadg {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  return bytes;
}

template <typename T>
T load_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::string header_field(const std::string& header, const std::string& key) {
  const auto pos = header.find("'" + key + "'");
  if (pos == std::string::npos) throw std::runtime_error("npy header lacks '" + key + "'");
  auto colon = header.find(':', pos);
  auto start = header.find_first_not_of(" ", colon + 1);
  if (header[start] == '\'') {
    const auto end = header.find('\'', start + 1);
    return header.substr(start + 1, end - start - 1);
  }
  if (header[start] == '(') {
    const auto end = header.find(')', start);
    return header.substr(start + 1, end - start - 1);
  }
  const auto end = header.find_first_of(",}", start);
  return header.substr(start, end - start);
}

}  // namespace

DenseArray parse_npy(std::span<const unsigned char> bytes) {
  static const unsigned char magic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (bytes.size() < 10 || std::memcmp(bytes.data(), magic, 6) != 0) {
    throw std::runtime_error("not an .npy stream");
  }
  const int major = bytes[6];
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = load_le<std::uint16_t>(bytes.data() + 8);
    offset = 10;
  } else {
    header_len = load_le<std::uint32_t>(bytes.data() + 8);
    offset = 12;
  }
  if (offset + header_len > bytes.size()) throw std::runtime_error("truncated .npy header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + offset), header_len);
  const std::string descr = header_field(header, "descr");
  if (header_field(header, "fortran_order").find("True") != std::string::npos) {
    throw std::runtime_error(".npy in Fortran order is not supported");
  }
  DenseArray out;
  std::stringstream dims(header_field(header, "shape"));
  std::string item;
  while (std::getline(dims, item, ',')) {
    if (item.find_first_not_of(" ") == std::string::npos) continue;
    out.shape.push_back(std::stoll(item));
  }
  std::int64_t count = 1;
  for (auto d : out.shape) count *= d;

  std::size_t width = 0;
  double (*convert)(const unsigned char*) = nullptr;
  if (descr == "<f8") {
    width = 8, convert = [](const unsigned char* p) { return load_le<double>(p); };
  } else if (descr == "<f4") {
    width = 4, convert = [](const unsigned char* p) { return double(load_le<float>(p)); };
  } else if (descr == "<i8") {
    width = 8, convert = [](const unsigned char* p) { return double(load_le<std::int64_t>(p)); };
  } else if (descr == "<i4") {
    width = 4, convert = [](const unsigned char* p) { return double(load_le<std::int32_t>(p)); };
  } else if (descr == "<i2") {
    width = 2, convert = [](const unsigned char* p) { return double(load_le<std::int16_t>(p)); };
  } else if (descr == "|u1") {
    width = 1, convert = [](const unsigned char* p) { return double(*p); };
  } else {
    throw std::runtime_error("unsupported .npy dtype " + descr);
  }
  const std::size_t data_off = offset + header_len;
  if (data_off + static_cast<std::size_t>(count) * width > bytes.size()) {
    throw std::runtime_error("truncated .npy payload");
  }
  out.values.resize(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    out.values[static_cast<std::size_t>(i)] = convert(bytes.data() + data_off + i * width);
  }
  return out;
}

DenseArray read_npy(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_npy(bytes);
}

void write_npy(const std::filesystem::path& path, const DenseArray& array) {
  std::string shape = "(";
  for (std::size_t i = 0; i < array.shape.size(); ++i) {
    shape += std::to_string(array.shape[i]);
    if (array.shape.size() == 1 || i + 1 < array.shape.size()) shape += ",";
    if (i + 1 < array.shape.size()) shape += " ";
  }
  shape += ")";
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape + ", }";
  // Pad so that magic + length + header is a multiple of 64, ending in '\n'.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const unsigned char magic[] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.write(reinterpret_cast<const char*>(magic), sizeof(magic));
  const auto len = static_cast<std::uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out << header;
  out.write(reinterpret_cast<const char*>(array.values.data()),
            static_cast<std::streamsize>(array.values.size() * sizeof(double)));
}

DenseArray read_npz(const std::filesystem::path& path, const std::string& key) {
  const auto bytes = read_file(path);
  // End-of-central-directory record is within the last 64 KiB + 22 bytes.
  if (bytes.size() < 22) throw std::runtime_error(path.string() + ": not a zip archive");
  std::size_t eocd = std::string::npos;
  const std::size_t lo = bytes.size() > 65557 ? bytes.size() - 65557 : 0;
  for (std::size_t i = bytes.size() - 22 + 1; i-- > lo;) {
    if (load_le<std::uint32_t>(bytes.data() + i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string::npos) throw std::runtime_error(path.string() + ": no zip directory");
  const std::uint16_t entries = load_le<std::uint16_t>(bytes.data() + eocd + 10);
  std::size_t cd = load_le<std::uint32_t>(bytes.data() + eocd + 16);

  struct Member {
    std::string name;
    std::uint16_t method;
    std::uint32_t comp_size, size, local;
  };
  std::vector<Member> members;
  for (std::uint16_t e = 0; e < entries; ++e) {
    if (cd + 46 > bytes.size() || load_le<std::uint32_t>(bytes.data() + cd) != 0x02014b50) {
      throw std::runtime_error(path.string() + ": corrupt zip directory");
    }
    Member m;
    m.method = load_le<std::uint16_t>(bytes.data() + cd + 10);
    m.comp_size = load_le<std::uint32_t>(bytes.data() + cd + 20);
    m.size = load_le<std::uint32_t>(bytes.data() + cd + 24);
    const auto name_len = load_le<std::uint16_t>(bytes.data() + cd + 28);
    const auto extra_len = load_le<std::uint16_t>(bytes.data() + cd + 30);
    const auto comment_len = load_le<std::uint16_t>(bytes.data() + cd + 32);
    m.local = load_le<std::uint32_t>(bytes.data() + cd + 42);
    m.name.assign(reinterpret_cast<const char*>(bytes.data() + cd + 46), name_len);
    if (m.comp_size == 0xffffffffu || m.size == 0xffffffffu || m.local == 0xffffffffu) {
      throw std::runtime_error(path.string() + ": zip64 members are not supported");
    }
    members.push_back(std::move(m));
    cd += 46 + name_len + extra_len + comment_len;
  }
  if (members.empty()) throw std::runtime_error(path.string() + ": empty archive");

  const Member* pick = &members.front();
  const std::string want = key.empty() ? "data" : key;
  bool found = false;
  for (const auto& m : members) {
    if (m.name == want || m.name == want + ".npy") {
      pick = &m;
      found = true;
    }
  }
  if (!found && !key.empty()) throw std::runtime_error(path.string() + ": no member " + key);

  const std::size_t lh = pick->local;
  if (lh + 30 > bytes.size() || load_le<std::uint32_t>(bytes.data() + lh) != 0x04034b50) {
    throw std::runtime_error(path.string() + ": corrupt local header");
  }
  const std::size_t data = lh + 30 + load_le<std::uint16_t>(bytes.data() + lh + 26) +
                           load_le<std::uint16_t>(bytes.data() + lh + 28);
  if (data + pick->comp_size > bytes.size()) throw std::runtime_error("truncated zip member");

  if (pick->method == 0) {
    return parse_npy({bytes.data() + data, pick->size});
  }
  if (pick->method != 8) throw std::runtime_error("unsupported zip compression method");
  std::vector<unsigned char> raw(pick->size);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw std::runtime_error("inflateInit2 failed");
  zs.next_in = const_cast<unsigned char*>(bytes.data() + data);
  zs.avail_in = pick->comp_size;
  zs.next_out = raw.data();
  zs.avail_out = pick->size;
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw std::runtime_error(path.string() + ": inflate failed");
  return parse_npy(raw);
}

DenseArray read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  DenseArray out;
  std::string line;
  std::int64_t rows = 0, cols = -1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::int64_t c = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
      const auto b = cell.find_first_not_of(" \t");
      cell = b == std::string::npos ? "" : cell.substr(b, cell.find_last_not_of(" \t") - b + 1);
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!cell.empty() && cell != "nan" && cell != "NaN" && cell != "NA") {
        std::size_t used = 0;
        try {
          v = std::stod(cell, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != cell.size()) {
          throw std::runtime_error(path.string() + ": row " + std::to_string(rows + 1) +
                                   ": not a number: '" + cell + "'");
        }
      }
      out.values.push_back(v);
      ++c;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cols >= 0 && c != cols) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(rows + 1) + " has " +
                               std::to_string(c) + " columns, expected " + std::to_string(cols));
    }
    cols = c;
    ++rows;
  }
  out.shape = {rows, std::max<std::int64_t>(cols, 0)};
  return out;
}

DenseArray read_dense_array(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".npy") return read_npy(path);
  if (ext == ".npz") return read_npz(path);
  if (ext == ".csv" || ext == ".txt") return read_csv_matrix(path);
  throw std::runtime_error("unrecognized array container: " + path.string());
}

}  // namespace metadg
