// Internal text-header + binary-block file helper shared by the NJD and NJG
// formats. Headers are ASCII "key value..." lines terminated by end_header;
// payload blocks follow in declaration order, little-endian.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace njord::detail {

static_assert(std::endian::native == std::endian::little,
              "block files are little-endian; big-endian hosts unsupported");

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class BlockFileWriter {
public:
    void line(const std::string& l) { header_.push_back(l); }

    void add_f32(const std::string& name, const std::vector<double>& vals) {
        Block b{name, "f32", {}};
        b.bytes.resize(vals.size() * 4);
        for (size_t i = 0; i < vals.size(); ++i) {
            const float f = static_cast<float>(vals[i]);
            std::memcpy(&b.bytes[i * 4], &f, 4);
        }
        blocks_.push_back(std::move(b));
    }

    void add_f64(const std::string& name, const std::vector<double>& vals) {
        Block b{name, "f64", {}};
        b.bytes.resize(vals.size() * 8);
        std::memcpy(b.bytes.data(), vals.data(), b.bytes.size());
        blocks_.push_back(std::move(b));
    }

    void add_i32(const std::string& name, const std::vector<int>& vals) {
        Block b{name, "i32", {}};
        b.bytes.resize(vals.size() * 4);
        for (size_t i = 0; i < vals.size(); ++i) {
            const int32_t v = static_cast<int32_t>(vals[i]);
            std::memcpy(&b.bytes[i * 4], &v, 4);
        }
        blocks_.push_back(std::move(b));
    }

    /// Concatenated payload bytes, e.g. for checksumming before write().
    std::vector<char> payload() const {
        std::vector<char> out;
        for (const Block& b : blocks_) out.insert(out.end(), b.bytes.begin(), b.bytes.end());
        return out;
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path + " for writing");
        for (const std::string& l : header_) out << l << "\n";
        for (const Block& b : blocks_) {
            const size_t elem = (b.dtype == "f64") ? 8 : 4;
            out << "block " << b.name << " " << b.dtype << " " << (b.bytes.size() / elem)
                << "\n";
        }
        out << "end_header\n";
        for (const Block& b : blocks_) {
            out.write(b.bytes.data(), static_cast<std::streamsize>(b.bytes.size()));
        }
        if (!out) throw std::runtime_error("write failure on " + path);
    }

private:
    struct Block {
        std::string name;
        std::string dtype;
        std::vector<char> bytes;
    };
    std::vector<std::string> header_;
    std::vector<Block> blocks_;
};

class BlockFileReader {
public:
    explicit BlockFileReader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        size_t offset = 0;
        std::string line;
        bool saw_end = false;
        while (std::getline(in, line)) {
            const size_t line_offset = offset;
            offset += line.size() + 1;
            if (line == "end_header") {
                saw_end = true;
                break;
            }
            std::istringstream ss(line);
            std::string key;
            ss >> key;
            if (key.empty()) {
                fail(line_offset, "empty header line");
            }
            if (key == "block") {
                BlockInfo bi;
                ss >> bi.name >> bi.dtype >> bi.count;
                if (!ss || (bi.dtype != "f32" && bi.dtype != "f64" && bi.dtype != "i32")) {
                    fail(line_offset, "malformed block declaration: " + line);
                }
                blocks_.push_back(bi);
            } else {
                std::string rest;
                std::getline(ss, rest);
                if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
                lines_.emplace_back(key, rest);
            }
        }
        if (!saw_end) fail(offset, "missing end_header");
        // Read all payloads now; files are desk-scale.
        for (BlockInfo& b : blocks_) {
            const size_t elem = (b.dtype == "f64") ? 8 : 4;
            b.bytes.resize(b.count * elem);
            in.read(b.bytes.data(), static_cast<std::streamsize>(b.bytes.size()));
            if (static_cast<size_t>(in.gcount()) != b.bytes.size()) {
                throw std::runtime_error(path_ + ": truncated payload in block " + b.name);
            }
            b.offset_in_payload = payload_size_;
            payload_size_ += b.bytes.size();
        }
    }

    /// The first header line must be exactly "magic <expected>".
    void require_magic(const std::string& expected) const {
        if (lines_.empty() || lines_[0].first != "magic" || lines_[0].second != expected) {
            fail(0, "bad magic, expected 'magic " + expected + "'");
        }
    }

    /// First value for a header key; throws when required and absent.
    std::string get(const std::string& key, bool required = true) const {
        for (const auto& [k, v] : lines_) {
            if (k == key) return v;
        }
        if (required) throw std::runtime_error(path_ + ": missing header key " + key);
        return {};
    }

    std::vector<std::string> get_all(const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : lines_) {
            if (k == key) out.push_back(v);
        }
        return out;
    }

    bool has_block(const std::string& name) const {
        for (const auto& b : blocks_) {
            if (b.name == name) return true;
        }
        return false;
    }

    std::vector<double> f32_block(const std::string& name) const {
        const BlockInfo& b = find(name, "f32");
        std::vector<double> out(b.count);
        for (size_t i = 0; i < b.count; ++i) {
            float f;
            std::memcpy(&f, &b.bytes[i * 4], 4);
            out[i] = static_cast<double>(f);
        }
        return out;
    }

    std::vector<double> f64_block(const std::string& name) const {
        const BlockInfo& b = find(name, "f64");
        std::vector<double> out(b.count);
        std::memcpy(out.data(), b.bytes.data(), b.bytes.size());
        return out;
    }

    std::vector<int> i32_block(const std::string& name) const {
        const BlockInfo& b = find(name, "i32");
        std::vector<int> out(b.count);
        for (size_t i = 0; i < b.count; ++i) {
            int32_t v;
            std::memcpy(&v, &b.bytes[i * 4], 4);
            out[i] = v;
        }
        return out;
    }

    std::vector<char> payload() const {
        std::vector<char> out;
        out.reserve(payload_size_);
        for (const auto& b : blocks_) out.insert(out.end(), b.bytes.begin(), b.bytes.end());
        return out;
    }

    const std::string& path() const { return path_; }

private:
    struct BlockInfo {
        std::string name;
        std::string dtype;
        size_t count = 0;
        std::vector<char> bytes;
        size_t offset_in_payload = 0;
    };

    [[noreturn]] void fail(size_t offset, const std::string& msg) const {
        throw std::runtime_error(path_ + ": header parse error at byte " +
                                 std::to_string(offset) + ": " + msg);
    }

    const BlockInfo& find(const std::string& name, const std::string& dtype) const {
        for (const auto& b : blocks_) {
            if (b.name == name) {
                if (b.dtype != dtype) {
                    throw std::runtime_error(path_ + ": block " + name + " has dtype " +
                                             b.dtype + ", expected " + dtype);
                }
                return b;
            }
        }
        throw std::runtime_error(path_ + ": missing block " + name);
    }

    std::string path_;
    std::vector<std::pair<std::string, std::string>> lines_;
    std::vector<BlockInfo> blocks_;
    size_t payload_size_ = 0;
};

}  // namespace njord::detail
