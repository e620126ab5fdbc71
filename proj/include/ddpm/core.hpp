#pragma once

// Array data model and error types shared by every module.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddpm {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON-lines log record on stderr. Kept to one line so scripts can parse it.
inline void log_line(const char* level, const std::string& msg) {
    std::string escaped;
    escaped.reserve(msg.size());
    for (char ch : msg) {
        if (ch == '"' || ch == '\\') {
            escaped += '\\';
            escaped += ch;
        } else if (ch == '\n') {
            escaped += "\\n";
        } else {
            escaped += ch;
        }
    }
    std::fprintf(stderr, "{\"level\":\"%s\",\"msg\":\"%s\"}\n", level, escaped.c_str());
}
inline void log_warn(const std::string& msg) { log_line("warn", msg); }
inline void log_info(const std::string& msg) { log_line("info", msg); }

struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    bool operator==(const Shape&) const = default;

    std::size_t size() const {
        return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
    }
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Batch of images or noise, (batch, channel, height, width), contiguous float32.
struct ImageBatch {
    Shape shape{};
    std::vector<float> data;

    ImageBatch() = default;
    explicit ImageBatch(Shape s) : shape(s) {
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            throw ShapeError("invalid shape " + s.str() + ": all components must be >= 1");
        data.assign(s.size(), 0.0f);
    }
    ImageBatch(Shape s, float fill) : ImageBatch(s) {
        for (auto& v : data) v = fill;
    }

    float& at(int n, int c, int h, int w) {
        return data[((std::size_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }
    float at(int n, int c, int h, int w) const {
        return data[((std::size_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }

    std::size_t size() const { return data.size(); }

    bool finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Elementwise mean squared difference, accumulated in double.
inline double batch_mse(const ImageBatch& a, const ImageBatch& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("batch_mse: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    return acc / double(a.data.size());
}

}  // namespace ddpm
