#include "echosonar/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <png.h>

#include "echosonar/error.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace echosonar {

namespace {

constexpr std::array<char, 4> kMagic{'E', 'S', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw IngestionError(path + ": truncated file");
  return value;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

WavAudio read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("wav " + path + ": cannot open");
  char riff[4], wave[4];
  in.read(riff, 4);
  get<std::uint32_t>(in, path);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw IngestionError("wav " + path + ": not a RIFF/WAVE file");
  }
  bool have_format = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (true) {
    char id[4];
    if (!in.read(id, 4)) throw IngestionError("wav " + path + ": missing data chunk");
    const auto size = get<std::uint32_t>(in, path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = get<std::uint16_t>(in, path);
      channels = get<std::uint16_t>(in, path);
      rate = get<std::uint32_t>(in, path);
      get<std::uint32_t>(in, path);
      get<std::uint16_t>(in, path);
      bits = get<std::uint16_t>(in, path);
      in.seekg(size - 16 + (size & 1), std::ios::cur);
      have_format = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_format) throw IngestionError("wav " + path + ": data chunk before fmt chunk");
      if (format != 1 || channels != 1 || bits != 16) {
        throw IngestionError("wav " + path + ": expected 16-bit PCM mono");
      }
      const std::size_t count = size / 2;
      std::vector<std::int16_t> raw(count);
      if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 2))) {
        throw IngestionError("wav " + path + ": truncated data chunk");
      }
      WavAudio audio;
      audio.sample_rate = rate;
      audio.samples.resize(static_cast<Eigen::Index>(count));
      for (std::size_t i = 0; i < count; ++i) audio.samples[static_cast<Eigen::Index>(i)] = raw[i] / 32768.0;
      return audio;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
}

void write_wav(const std::string& path, const Eigen::VectorXd& samples, double sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("wav " + path + ": cannot write");
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, 1);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, rate);
  put<std::uint32_t>(out, rate * 2);
  put<std::uint16_t>(out, 2);
  put<std::uint16_t>(out, 16);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double scaled = std::round(samples[i] * 32768.0);
    put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
  }
}

void write_records(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path + ": cannot write");
  for (const Record& r : records) {
    out.write(kMagic.data(), 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.values.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.values.cols()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.kind));
    put<std::uint32_t>(out, 0);
    put<double>(out, r.scalar);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = r.values;
    out.write(reinterpret_cast<const char*>(row_major.data()),
              static_cast<std::streamsize>(row_major.size() * static_cast<Eigen::Index>(sizeof(double))));
  }
  if (!out) throw IngestionError(path + ": write failed");
}

std::vector<Record> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path + ": cannot open");
  std::vector<Record> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || magic != kMagic) throw IngestionError(path + ": bad record magic");
    if (get<std::uint32_t>(in, path) != kVersion) throw IngestionError(path + ": unsupported version");
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    const auto kind = get<std::uint32_t>(in, path);
    get<std::uint32_t>(in, path);
    Record r;
    if (kind > static_cast<std::uint32_t>(RecordKind::model)) throw IngestionError(path + ": unknown record kind");
    r.kind = static_cast<RecordKind>(kind);
    r.scalar = get<double>(in, path);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major(rows, cols);
    if (!in.read(reinterpret_cast<char*>(row_major.data()),
                 static_cast<std::streamsize>(row_major.size() * static_cast<Eigen::Index>(sizeof(double))))) {
      throw IngestionError(path + ": truncated record payload");
    }
    r.values = row_major;
    records.push_back(std::move(r));
  }
  return records;
}

void write_profile(const std::string& path, const EchoProfile& profile) {
  const RecordKind kind =
      profile.kind == ProfileKind::original ? RecordKind::original_profile : RecordKind::differential_profile;
  write_records(path, {Record{kind, profile.frame_duration, profile.values}});
}

EchoProfile read_profile(const std::string& path) {
  auto records = read_records(path);
  if (records.size() != 1) throw IngestionError(path + ": expected exactly one profile record");
  Record& r = records.front();
  if (r.kind != RecordKind::original_profile && r.kind != RecordKind::differential_profile) {
    throw IngestionError(path + ": record is not an echo profile");
  }
  EchoProfile p;
  p.values = std::move(r.values);
  p.frame_duration = r.scalar;
  p.kind = r.kind == RecordKind::original_profile ? ProfileKind::original : ProfileKind::differential;
  return p;
}

Record window_record(const EchoWindow& window, double timestamp) {
  Record r;
  r.kind = RecordKind::window;
  r.scalar = timestamp;
  r.values.resize(2 * window.rows(), window.cols());
  r.values << window.channels[0], window.channels[1];
  return r;
}

EchoWindow window_from_record(const Record& record) {
  if (record.kind != RecordKind::window || record.values.rows() % 2 != 0) {
    throw IngestionError("record is not an echo window");
  }
  const Eigen::Index bins = record.values.rows() / 2;
  EchoWindow w;
  w.channels[0] = record.values.topRows(bins);
  w.channels[1] = record.values.bottomRows(bins);
  return w;
}

void write_pgm(const std::string& path, const Eigen::MatrixXd& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path + ": cannot write");
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) out.put(static_cast<char>(to_byte(image(r, c))));
  }
}

void write_png(const std::string& path, const Eigen::MatrixXd& image) {
  std::vector<unsigned char> pixels;
  pixels.reserve(static_cast<std::size_t>(image.size()));
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) pixels.push_back(to_byte(image(r, c)));
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.cols());
  png.height = static_cast<png_uint_32>(image.rows());
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, pixels.data(), static_cast<png_int_32>(image.cols()), nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IngestionError(path + ": " + message);
  }
}

}  // namespace echosonar
