/*
   Copyright 2026 The lbcdo Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/


#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <boost/crc.hpp>

#include "lbcdo/errors.hpp"

namespace lbcdo {

enum class LayerKind : std::uint8_t { Conv1d = 1, Dense = 2, Flatten = 3 };
enum class Activation : std::uint8_t { None = 0, Relu = 1 };
enum class Padding : std::uint8_t { Valid = 0, Same = 1 };
enum class InputScaling : std::uint8_t { None = 0, MinMax = 1 };

/// Conv1d weights are [kernel][in_channels][filters], dense weights are
/// [in_features][units]; both row-major.
struct Layer {
    LayerKind kind = LayerKind::Dense;
    Activation activation = Activation::None;
    std::uint32_t filters = 0;
    std::uint32_t kernel = 0;
    std::uint32_t in_channels = 0;
    std::uint32_t units = 0;
    std::uint32_t in_features = 0;
    std::vector<float> weights;
    std::vector<float> bias;

    static Layer conv1d(std::uint32_t filters, std::uint32_t kernel, std::uint32_t in_channels, Activation act) {
        Layer l;
        l.kind = LayerKind::Conv1d;
        l.activation = act;
        l.filters = filters;
        l.kernel = kernel;
        l.in_channels = in_channels;
        l.weights.assign(static_cast<std::size_t>(kernel) * in_channels * filters, 0.0f);
        l.bias.assign(filters, 0.0f);
        return l;
    }

    static Layer dense(std::uint32_t units, std::uint32_t in_features, Activation act) {
        Layer l;
        l.kind = LayerKind::Dense;
        l.activation = act;
        l.units = units;
        l.in_features = in_features;
        l.weights.assign(static_cast<std::size_t>(in_features) * units, 0.0f);
        l.bias.assign(units, 0.0f);
        return l;
    }

    static Layer flatten() {
        Layer l;
        l.kind = LayerKind::Flatten;
        return l;
    }
};

struct NetworkWeights {
    /// 'g' (quote interpolator), 'f' (x0 inference) or 'n' (no architecture check).
    char tag = 'n';
    Padding padding = Padding::Same;
    InputScaling scaling = InputScaling::None;
    std::uint32_t k = 0;
    std::uint32_t input_length = 0;
    std::uint32_t input_channels = 1;
    /// Training range [lo, hi] of each input feature.
    std::vector<std::array<double, 2>> ranges;
    std::vector<Layer> layers;
};

inline constexpr std::array<char, 8> kWeightMagic{'L', 'B', 'C', 'D', 'O', 'N', 'N', '\0'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

struct Shape {
    bool flat = false;
    std::size_t length = 0;
    std::size_t channels = 0;
    std::size_t size() const { return flat ? length : length * channels; }
};

/// Shape after `layer`, or a LoadError naming the layer.
inline Shape next_shape(const Shape& in, const Layer& layer, Padding padding, int index) {
    switch (layer.kind) {
    case LayerKind::Conv1d: {
        if (in.flat) throw LoadError("conv1d layer after flatten", index);
        if (layer.filters == 0 || layer.kernel == 0) throw LoadError("conv1d layer with zero filters or kernel", index);
        if (layer.in_channels != in.channels) {
            throw LoadError("conv1d expects " + std::to_string(layer.in_channels) + " input channels, got " +
                                std::to_string(in.channels),
                            index);
        }
        std::size_t length = in.length;
        if (padding == Padding::Valid) {
            if (layer.kernel > in.length) throw LoadError("conv1d kernel longer than its valid-padded input", index);
            length = in.length - layer.kernel + 1;
        }
        return {false, length, layer.filters};
    }
    case LayerKind::Dense:
        if (!in.flat) throw LoadError("dense layer needs a flattened input", index);
        if (layer.units == 0) throw LoadError("dense layer with zero units", index);
        if (layer.in_features != in.length) {
            throw LoadError("dense layer expects " + std::to_string(layer.in_features) + " inputs, got " +
                                std::to_string(in.length),
                            index);
        }
        return {true, layer.units, 1};
    case LayerKind::Flatten:
        return {true, in.size(), 1};
    }
    throw LoadError("unknown layer kind", index);
}

struct LayerRule {
    LayerKind kind;
    std::uint32_t size;   // filters or units
    std::uint32_t kernel; // conv only
    Activation activation;
};

inline void check_rules(const NetworkWeights& w, const std::vector<LayerRule>& rules, const char* name) {
    const std::string prefix = std::string("network tagged '") + w.tag + "' must follow the " + name +
                               " architecture: ";
    if (w.layers.size() != rules.size()) {
        throw LoadError(prefix + "expected " + std::to_string(rules.size()) + " layers, found " +
                            std::to_string(w.layers.size()),
                        static_cast<int>(std::min(w.layers.size(), rules.size())));
    }
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const Layer& l = w.layers[i];
        const LayerRule& r = rules[i];
        const int idx = static_cast<int>(i);
        if (l.kind != r.kind) throw LoadError(prefix + "wrong layer kind", idx);
        if (l.kind == LayerKind::Flatten) continue;
        if (l.activation != r.activation) throw LoadError(prefix + "wrong activation", idx);
        if (l.kind == LayerKind::Conv1d && (l.filters != r.size || l.kernel != r.kernel)) {
            throw LoadError(prefix + "conv1d needs " + std::to_string(r.size) + " filters of size " +
                                std::to_string(r.kernel),
                            idx);
        }
        if (l.kind == LayerKind::Dense && l.units != r.size) {
            throw LoadError(prefix + "dense layer needs " + std::to_string(r.size) + " units, found " +
                                std::to_string(l.units),
                            idx);
        }
    }
}

} // namespace detail

/// Shape composition, finiteness and (for tags g and f) the fixed
/// architectures. Throws LoadError.
inline void validate(const NetworkWeights& w) {
    if (w.tag != 'g' && w.tag != 'f' && w.tag != 'n') throw LoadError("unknown network tag", -1);
    if (w.input_length == 0 || w.input_channels == 0) throw LoadError("empty input", -1);
    if (w.scaling == InputScaling::MinMax && w.ranges.size() != static_cast<std::size_t>(w.input_length) * w.input_channels) {
        throw LoadError("min-max scaling needs one range per input feature", -1);
    }
    for (const auto& r : w.ranges) {
        if (!std::isfinite(r[0]) || !std::isfinite(r[1]) || !(r[0] < r[1])) throw LoadError("invalid input range", -1);
    }
    detail::Shape shape{false, w.input_length, w.input_channels};
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const Layer& l = w.layers[i];
        const int idx = static_cast<int>(i);
        shape = detail::next_shape(shape, l, w.padding, idx);
        std::size_t expect_w = 0;
        std::size_t expect_b = 0;
        if (l.kind == LayerKind::Conv1d) {
            expect_w = static_cast<std::size_t>(l.kernel) * l.in_channels * l.filters;
            expect_b = l.filters;
        } else if (l.kind == LayerKind::Dense) {
            expect_w = static_cast<std::size_t>(l.in_features) * l.units;
            expect_b = l.units;
        }
        if (l.weights.size() != expect_w || l.bias.size() != expect_b) throw LoadError("tensor size mismatch", idx);
        auto finite = [](float v) { return std::isfinite(v); };
        if (!std::all_of(l.weights.begin(), l.weights.end(), finite) ||
            !std::all_of(l.bias.begin(), l.bias.end(), finite)) {
            throw LoadError("non-finite weight", idx);
        }
    }
    if (w.layers.empty() || !shape.flat) throw LoadError("network must end in a dense or flatten layer", -1);

    using R = detail::LayerRule;
    constexpr auto C = LayerKind::Conv1d;
    constexpr auto D = LayerKind::Dense;
    constexpr auto F = LayerKind::Flatten;
    constexpr auto relu = Activation::Relu;
    constexpr auto none = Activation::None;
    if (w.tag == 'g') {
        if (w.input_length * w.input_channels != 3) throw LoadError("network g takes (rho, beta, x0)", -1);
        detail::check_rules(w,
                            {R{C, 16, 4, relu}, R{C, 32, 16, relu}, R{C, 64, 32, relu}, R{C, 128, 64, relu},
                             R{F, 0, 0, none}, R{D, 256, 0, relu}, R{D, 128, 0, relu}, R{D, 64, 0, relu},
                             R{D, 8, 0, none}},
                            "quote interpolator");
    } else if (w.tag == 'f') {
        if (w.input_length * w.input_channels != 2) throw LoadError("network f takes (rho, beta)", -1);
        if (w.k == 0) throw LoadError("network f needs K > 0", -1);
        detail::check_rules(w,
                            {R{C, 16, 2, relu}, R{C, 32, 16, relu}, R{C, 64, 32, relu}, R{C, 128, 64, relu},
                             R{F, 0, 0, none}, R{D, 4 * w.k, 0, relu}, R{D, 2 * w.k, 0, relu},
                             R{D, w.k, 0, none}},
                            "x0 inference");
    }
}

namespace detail {

class Writer {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        const U bits = std::bit_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }

    std::vector<unsigned char> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const unsigned char> data) : data_(data) {}

    template <class T>
    T get(int layer, const char* what) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        if (data_.size() - pos_ < sizeof(T)) {
            throw LoadError(std::string("truncated weight file while reading ") + what, layer);
        }
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    std::vector<float> floats(std::size_t n, int layer, const char* what) {
        if ((data_.size() - pos_) / 4 < n) throw LoadError(std::string("truncated weight file in ") + what, layer);
        std::vector<float> out(n);
        for (auto& v : out) v = get<float>(layer, what);
        return out;
    }

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const unsigned char> data_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32(std::span<const unsigned char> bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

} // namespace detail

/// Serialises the network; the layout is specified in docs/format.md.
inline std::vector<unsigned char> encode_weights(const NetworkWeights& w) {
    validate(w);
    detail::Writer out;
    for (char c : kWeightMagic) out.put(static_cast<std::uint8_t>(c));
    out.put(kWeightVersion);
    out.put(static_cast<std::uint8_t>(w.tag));
    out.put(static_cast<std::uint8_t>(w.padding));
    out.put(static_cast<std::uint8_t>(w.scaling));
    out.put(std::uint8_t{0});
    out.put(w.k);
    out.put(w.input_length);
    out.put(w.input_channels);
    out.put(static_cast<std::uint32_t>(w.ranges.size()));
    for (const auto& r : w.ranges) {
        out.put(r[0]);
        out.put(r[1]);
    }
    out.put(static_cast<std::uint32_t>(w.layers.size()));
    for (const Layer& l : w.layers) {
        out.put(static_cast<std::uint8_t>(l.kind));
        out.put(static_cast<std::uint8_t>(l.activation));
        out.put(std::uint16_t{0});
        if (l.kind == LayerKind::Conv1d) {
            out.put(l.filters);
            out.put(l.kernel);
            out.put(l.in_channels);
        } else if (l.kind == LayerKind::Dense) {
            out.put(l.units);
            out.put(l.in_features);
        }
        for (float v : l.weights) out.put(v);
        for (float v : l.bias) out.put(v);
    }
    out.put(detail::crc32(out.bytes));
    return std::move(out.bytes);
}

inline NetworkWeights decode_weights(std::span<const unsigned char> bytes) {
    detail::Reader in(bytes);
    for (char c : kWeightMagic) {
        if (in.get<std::uint8_t>(-1, "magic") != static_cast<std::uint8_t>(c)) throw LoadError("bad magic bytes", -1);
    }
    const auto version = in.get<std::uint32_t>(-1, "version");
    if (version != kWeightVersion) {
        throw LoadError("unsupported weight format version " + std::to_string(version), -1);
    }
    NetworkWeights w;
    w.tag = static_cast<char>(in.get<std::uint8_t>(-1, "tag"));
    const auto padding = in.get<std::uint8_t>(-1, "padding");
    if (padding > 1) throw LoadError("unknown padding convention", -1);
    w.padding = static_cast<Padding>(padding);
    const auto scaling = in.get<std::uint8_t>(-1, "scaling");
    if (scaling > 1) throw LoadError("unknown input scaling", -1);
    w.scaling = static_cast<InputScaling>(scaling);
    if (in.get<std::uint8_t>(-1, "reserved") != 0) throw LoadError("reserved header byte must be 0", -1);
    w.k = in.get<std::uint32_t>(-1, "K");
    w.input_length = in.get<std::uint32_t>(-1, "input length");
    w.input_channels = in.get<std::uint32_t>(-1, "input channels");
    const auto n_ranges = in.get<std::uint32_t>(-1, "range count");
    if (n_ranges > in.remaining() / 16) throw LoadError("truncated weight file in input ranges", -1);
    w.ranges.resize(n_ranges);
    for (auto& r : w.ranges) {
        r[0] = in.get<double>(-1, "range");
        r[1] = in.get<double>(-1, "range");
    }
    const auto n_layers = in.get<std::uint32_t>(-1, "layer count");
    w.layers.reserve(std::min<std::size_t>(n_layers, in.remaining() / 4));
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const int idx = static_cast<int>(i);
        Layer l;
        const auto kind = in.get<std::uint8_t>(idx, "layer kind");
        if (kind < 1 || kind > 3) throw LoadError("unknown layer kind " + std::to_string(kind), idx);
        l.kind = static_cast<LayerKind>(kind);
        const auto act = in.get<std::uint8_t>(idx, "activation");
        if (act > 1) throw LoadError("unknown activation", idx);
        l.activation = static_cast<Activation>(act);
        in.get<std::uint16_t>(idx, "reserved");
        if (l.kind == LayerKind::Conv1d) {
            l.filters = in.get<std::uint32_t>(idx, "filters");
            l.kernel = in.get<std::uint32_t>(idx, "kernel size");
            l.in_channels = in.get<std::uint32_t>(idx, "input channels");
            l.weights = in.floats(static_cast<std::size_t>(l.kernel) * l.in_channels * l.filters, idx, "conv1d kernel");
            l.bias = in.floats(l.filters, idx, "conv1d bias");
        } else if (l.kind == LayerKind::Dense) {
            l.units = in.get<std::uint32_t>(idx, "units");
            l.in_features = in.get<std::uint32_t>(idx, "input features");
            l.weights = in.floats(static_cast<std::size_t>(l.in_features) * l.units, idx, "dense kernel");
            l.bias = in.floats(l.units, idx, "dense bias");
        }
        w.layers.push_back(std::move(l));
    }
    const std::size_t body = bytes.size() - in.remaining();
    const auto stored = in.get<std::uint32_t>(-1, "checksum");
    if (in.remaining() != 0) throw LoadError("trailing bytes after checksum", -1);
    if (stored != detail::crc32(bytes.first(body))) throw LoadError("checksum mismatch", -1);
    validate(w);
    return w;
}

inline void save_weights(const NetworkWeights& w, const std::filesystem::path& path) {
    const auto bytes = encode_weights(w);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open weight file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing weight file: " + path.string());
}

inline NetworkWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file: " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_weights(bytes);
}

/// Forward pass on the raw feature vector (length input_length * input_channels,
/// position-major).
inline std::vector<double> forward(const NetworkWeights& w, std::span<const double> input) {
    const std::size_t features = static_cast<std::size_t>(w.input_length) * w.input_channels;
    if (input.size() != features) throw InvalidParameter("forward: input has the wrong number of features");
    std::vector<double> cur(input.begin(), input.end());
    if (w.scaling == InputScaling::MinMax) {
        for (std::size_t i = 0; i < features; ++i) cur[i] = (cur[i] - w.ranges[i][0]) / (w.ranges[i][1] - w.ranges[i][0]);
    }
    std::size_t length = w.input_length;
    std::size_t channels = w.input_channels;
    std::vector<double> next;
    for (const Layer& l : w.layers) {
        switch (l.kind) {
        case LayerKind::Conv1d: {
            const std::size_t k = l.kernel;
            const std::size_t f = l.filters;
            const long pad = w.padding == Padding::Same ? static_cast<long>((k - 1) / 2) : 0;
            const std::size_t out_len = w.padding == Padding::Same ? length : length - k + 1;
            next.assign(out_len * f, 0.0);
            for (std::size_t t = 0; t < out_len; ++t) {
                double* o = next.data() + t * f;
                for (std::size_t j = 0; j < f; ++j) o[j] = l.bias[j];
                for (std::size_t i = 0; i < k; ++i) {
                    const long src = static_cast<long>(t + i) - pad;
                    if (src < 0 || src >= static_cast<long>(length)) continue;
                    for (std::size_t c = 0; c < channels; ++c) {
                        const double v = cur[static_cast<std::size_t>(src) * channels + c];
                        const float* wr = l.weights.data() + (i * channels + c) * f;
                        for (std::size_t j = 0; j < f; ++j) o[j] += v * static_cast<double>(wr[j]);
                    }
                }
            }
            length = out_len;
            channels = f;
            break;
        }
        case LayerKind::Dense: {
            next.assign(l.bias.begin(), l.bias.end());
            for (std::size_t i = 0; i < l.in_features; ++i) {
                const double v = cur[i];
                const float* wr = l.weights.data() + i * l.units;
                for (std::size_t j = 0; j < l.units; ++j) next[j] += v * static_cast<double>(wr[j]);
            }
            length = l.units;
            channels = 1;
            break;
        }
        case LayerKind::Flatten:
            length *= channels;
            channels = 1;
            continue;
        }
        if (l.activation == Activation::Relu) {
            for (double& v : next) v = std::max(v, 0.0);
        }
        cur.swap(next);
    }
    return cur;
}

namespace detail {

inline bool outside_ranges(const NetworkWeights& w, std::span<const double> input) {
    if (w.ranges.size() != input.size()) return false;
    for (std::size_t i = 0; i < input.size(); ++i) {
        if (input[i] < w.ranges[i][0] || input[i] > w.ranges[i][1]) return true;
    }
    return false;
}

} // namespace detail

/// Mean of the network outputs at (rho, beta, x0), clamped at 0. Sets
/// *outside when an input lies outside the recorded training ranges.
inline double forward_g(const NetworkWeights& w, double rho, double beta, double x0, bool* outside = nullptr) {
    const std::array<double, 3> in{rho, beta, x0};
    if (outside != nullptr) *outside = detail::outside_ranges(w, in);
    const auto out = forward(w, in);
    double sum = 0.0;
    for (double v : out) sum += v;
    return std::max(0.0, sum / static_cast<double>(out.size()));
}

struct XZeroInference {
    std::vector<double> x0;
    /// Fraction of adjacent pairs with x0[k + 1] >= x0[k].
    double monotone_fraction = 1.0;
    bool outside_ranges = false;
};

inline XZeroInference forward_f(const NetworkWeights& w, double rho, double beta) {
    const std::array<double, 2> in{rho, beta};
    XZeroInference r;
    r.outside_ranges = detail::outside_ranges(w, in);
    r.x0 = forward(w, in);
    if (r.x0.size() > 1) {
        std::size_t up = 0;
        for (std::size_t k = 0; k + 1 < r.x0.size(); ++k) up += r.x0[k + 1] >= r.x0[k] ? 1 : 0;
        r.monotone_fraction = static_cast<double>(up) / static_cast<double>(r.x0.size() - 1);
    }
    return r;
}

} // namespace lbcdo
