#include "oiqa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "oiqa/random.hpp"

namespace oiqa {

std::string_view to_string(DistortionKind kind) {
    switch (kind) {
        case DistortionKind::none: return "none";
        case DistortionKind::gaussian_blur: return "gaussian_blur";
        case DistortionKind::additive_noise: return "additive_noise";
        case DistortionKind::contrast_crush: return "contrast_crush";
    }
    return "none";
}

DistortionKind distortion_from_string(std::string_view name) {
    for (auto k : {DistortionKind::none, DistortionKind::gaussian_blur, DistortionKind::additive_noise,
                   DistortionKind::contrast_crush})
        if (to_string(k) == name) return k;
    throw FormatError("unknown distortion kind '" + std::string(name) + "'");
}

Tensor make_base_image(std::size_t size, std::uint64_t seed) {
    if (size == 0 || size > kMaxImageSize)
        throw InputError("image size must be in [1, " + std::to_string(kMaxImageSize) + "]");
    constexpr std::size_t kChannels = 3;
    Rng rng(seed);
    Tensor img({kChannels, size, size});
    const double s = static_cast<double>(size);

    for (std::size_t c = 0; c < kChannels; ++c) {
        const double a0 = rng.uniform(0.0, 1.0), ax = rng.uniform(-1.0, 1.0), ay = rng.uniform(-1.0, 1.0);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) img.at(c, y, x) = a0 + ax * x / s + ay * y / s;
    }
    for (int k = 0; k < 2; ++k) {
        const double freq = rng.uniform(1.0, s / 4.0);
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = rng.uniform(0.2, 0.5);
        double weight[kChannels];
        for (auto& w : weight) w = rng.uniform(0.3, 1.0);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double t = (std::cos(theta) * x + std::sin(theta) * y) / s;
                const double v = amp * std::sin(2.0 * std::numbers::pi * freq * t + phase);
                for (std::size_t c = 0; c < kChannels; ++c) img.at(c, y, x) += weight[c] * v;
            }
    }
    const std::size_t patches = 3 + rng.below(3);
    for (std::size_t p = 0; p < patches; ++p) {
        const std::size_t w = 2 + rng.below(std::max<std::size_t>(1, size / 3));
        const std::size_t h = 2 + rng.below(std::max<std::size_t>(1, size / 3));
        const std::size_t x0 = rng.below(size), y0 = rng.below(size);
        double color[kChannels];
        for (auto& v : color) v = rng.uniform(-1.0, 2.0);
        for (std::size_t y = y0; y < std::min(size, y0 + h); ++y)
            for (std::size_t x = x0; x < std::min(size, x0 + w); ++x)
                for (std::size_t c = 0; c < kChannels; ++c) img.at(c, y, x) = color[c];
    }

    const auto v = img.values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double lo_v = *lo, span = std::max(*hi - *lo, 1e-9);
    for (auto& x : img.values()) x = 0.05 + 0.9 * (x - lo_v) / span;
    return img;
}

namespace {

Tensor gaussian_blur(const Tensor& image, double sigma) {
    const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        taps[static_cast<std::size_t>(i + radius)] = w;
        total += w;
    }
    for (auto& t : taps) t /= total;

    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    auto clamp_index = [](long i, std::size_t n) {
        return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
    };
    Tensor tmp(image.shape()), out(image.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    s += taps[static_cast<std::size_t>(i + radius)] * image.at(ch, y, clamp_index(static_cast<long>(x) + i, w));
                tmp.at(ch, y, x) = s;
            }
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    s += taps[static_cast<std::size_t>(i + radius)] * tmp.at(ch, clamp_index(static_cast<long>(y) + i, h), x);
                out.at(ch, y, x) = s;
            }
    return out;
}

}  // namespace

Tensor apply_distortion(const Tensor& image, DistortionKind kind, double severity, std::uint64_t seed) {
    if (severity < 0.0) throw InputError("distortion severity must be non-negative");
    if (severity == 0.0 || kind == DistortionKind::none) return image;
    switch (kind) {
        case DistortionKind::gaussian_blur:
            return gaussian_blur(image, 2.0 * severity);
        case DistortionKind::additive_noise: {
            Rng rng(seed);
            Tensor out = image;
            for (auto& v : out.values()) v = std::clamp(v + 0.15 * severity * rng.normal(), 0.0, 1.0);
            return out;
        }
        case DistortionKind::contrast_crush: {
            const auto v = image.values();
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            const double gain = 1.0 - 0.85 * std::min(severity, 1.0);
            Tensor out = image;
            for (auto& x : out.values()) x = mean + gain * (x - mean);
            return out;
        }
        case DistortionKind::none:
            break;
    }
    return image;
}

std::vector<QualitySample> generate_dataset(std::size_t n, std::size_t image_size, std::uint64_t seed) {
    if (n == 0) throw InputError("generate_dataset: n must be at least 1");
    constexpr DistortionKind kinds[] = {DistortionKind::gaussian_blur, DistortionKind::additive_noise,
                                        DistortionKind::contrast_crush};
    std::vector<QualitySample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t sample_seed = derive_seed(seed, i);
        Rng rng(sample_seed);
        QualitySample& s = out[i];
        char id[24];
        std::snprintf(id, sizeof id, "img%05zu", i);
        s.id = id;
        s.kind = kinds[rng.below(3)];
        s.severity = rng.uniform();
        s.label = 1.0 - s.severity;
        s.image = apply_distortion(make_base_image(image_size, derive_seed(sample_seed, 1)), s.kind, s.severity,
                                   derive_seed(sample_seed, 2));
    }
    return out;
}

DatasetSplit split_dataset(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    const std::size_t n_train = n * 7 / 10, n_val = n / 10;
    DatasetSplit split;
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                     order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
    return split;
}

std::vector<QualitySample> select(const std::vector<QualitySample>& samples, const std::vector<std::size_t>& indices) {
    std::vector<QualitySample> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(samples.at(i));
    return out;
}

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("ppm: " + what + " at byte offset " + std::to_string(pos_));
    }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number() {
        skip_space_and_comments();
        const std::size_t start = pos_;
        std::size_t value = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (value > 1u << 20) fail("header value too large");
            ++pos_;
        }
        if (pos_ == start) fail("expected a decimal number");
        return value;
    }

    std::size_t pos_ = 0;
    std::string_view bytes_;
};

}  // namespace

Tensor decode_ppm(std::string_view bytes) {
    HeaderReader r(bytes);
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) r.fail("expected P5 or P6 magic");
    const std::size_t channels = bytes[1] == '6' ? 3 : 1;
    r.pos_ = 2;
    const std::size_t width = r.number();
    const std::size_t height = r.number();
    const std::size_t maxval = r.number();
    if (width == 0 || height == 0) r.fail("zero image dimension");
    if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    if (r.pos_ >= bytes.size()) r.fail("missing whitespace after maxval");
    ++r.pos_;
    const std::size_t need = width * height * channels;
    if (bytes.size() - r.pos_ < need)
        throw FormatError("ppm: truncated payload, expected " + std::to_string(need) + " bytes at byte offset " +
                          std::to_string(r.pos_) + ", found " + std::to_string(bytes.size() - r.pos_));
    Tensor img({channels, height, width});
    const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos_);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < channels; ++c)
                img.at(c, y, x) = payload[(y * width + x) * channels + c] / 255.0;
    return img;
}

std::string encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw ShapeError("ppm: expected a 1×H×W or 3×H×W image, got " + shape_string(image.shape()));
    const std::size_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
    std::string out = (channels == 3 ? "P6\n" : "P5\n") + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + width * height * channels);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < channels; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                out[header + (y * width + x) * channels + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
    return out;
}

Tensor load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return decode_ppm(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_ppm(const std::filesystem::path& path, const Tensor& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    const std::string bytes = encode_ppm(image);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_dataset(const std::filesystem::path& dir, const std::vector<QualitySample>& samples, std::uint64_t split_seed) {
    std::filesystem::create_directories(dir / "images");
    const DatasetSplit split = split_dataset(samples.size(), split_seed);
    std::vector<std::string_view> part(samples.size());
    for (auto i : split.train) part[i] = "train";
    for (auto i : split.val) part[i] = "val";
    for (auto i : split.test) part[i] = "test";
    std::ofstream csv(dir / "labels.csv", std::ios::binary);
    if (!csv) throw FormatError("cannot write " + (dir / "labels.csv").string());
    csv << "id,label,kind,severity,split\n";
    char buf[64];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        save_ppm(dir / "images" / (s.id + ".ppm"), s.image);
        csv << s.id;
        std::snprintf(buf, sizeof buf, ",%.17g,", s.label);
        csv << buf << to_string(s.kind);
        std::snprintf(buf, sizeof buf, ",%.17g,", s.severity);
        csv << buf << part[i] << '\n';
    }
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream csv(dir / "labels.csv");
    if (!csv) throw FormatError("dataset: cannot open " + (dir / "labels.csv").string());
    std::string line;
    if (!std::getline(csv, line) || line != "id,label,kind,severity,split")
        throw FormatError("dataset: unexpected labels.csv header");
    LoadedDataset out;
    std::size_t row = 1;
    while (std::getline(csv, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != 5) throw FormatError("dataset: labels.csv row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields");
        QualitySample s;
        s.id = fields[0];
        try {
            s.label = std::stod(fields[1]);
            s.severity = std::stod(fields[3]);
        } catch (const std::exception&) {
            throw FormatError("dataset: labels.csv row " + std::to_string(row) + " has a non-numeric field");
        }
        s.kind = distortion_from_string(fields[2]);
        if (!(s.label >= 0.0 && s.label <= 1.0)) throw FormatError("dataset: label outside [0, 1] in row " + std::to_string(row));
        s.image = load_ppm(dir / "images" / (s.id + ".ppm"));
        const std::size_t index = out.samples.size();
        if (fields[4] == "train")
            out.split.train.push_back(index);
        else if (fields[4] == "val")
            out.split.val.push_back(index);
        else if (fields[4] == "test")
            out.split.test.push_back(index);
        else
            throw FormatError("dataset: unknown split '" + fields[4] + "' in row " + std::to_string(row));
        out.samples.push_back(std::move(s));
    }
    if (out.samples.empty()) throw FormatError("dataset: no samples in " + dir.string());
    return out;
}

}  // namespace oiqa
