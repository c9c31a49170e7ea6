#include "spyflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "spyflow/binary_io.hpp"

namespace spyflow {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'Y', 'N'};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return offset_; }

    void need(std::size_t n, const std::string& what) const {
        if (bytes_.size() - offset_ < n) {
            throw FormatError("checkpoint truncated at offset " + std::to_string(offset_) + ": " + what + " needs " +
                              std::to_string(n) + " bytes, " + std::to_string(n - (bytes_.size() - offset_)) +
                              " missing");
        }
    }

    std::uint32_t u32(const std::string& what) {
        need(4, what);
        const std::uint32_t v = read_le_u32(bytes_.data() + offset_);
        offset_ += 4;
        return v;
    }

    void expect_u32(std::uint32_t expected, const std::string& what) {
        const std::size_t at = offset_;
        const std::uint32_t v = u32(what);
        if (v != expected) {
            throw FormatError("checkpoint offset " + std::to_string(at) + ": " + what + " is " + std::to_string(v) +
                              ", expected " + std::to_string(expected));
        }
    }

    void floats(std::span<float> out, const std::string& what) {
        need(out.size() * 4, what);
        for (float& f : out) {
            f = read_le_f32(bytes_.data() + offset_);
            offset_ += 4;
        }
    }

    void magic() {
        need(4, "magic");
        if (std::memcmp(bytes_.data(), kMagic, 4) != 0) {
            throw FormatError("checkpoint offset 0: bad magic, expected \"SPYN\"");
        }
        offset_ += 4;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t offset_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const PyramidModel& model) {
    model.validate();
    std::vector<std::uint8_t> out;
    out.reserve(checkpoint_size(model));
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    append_le_u32(out, kCheckpointVersion);
    append_le_u32(out, static_cast<std::uint32_t>(model.networks.size()));
    for (const auto& net : model.networks) {
        append_le_u32(out, kLevelLayers);
        for (const auto& layer : net.layers) {
            for (int d : layer.weights.shape()) append_le_u32(out, static_cast<std::uint32_t>(d));
            for (float w : layer.weights.data()) append_le_f32(out, w);
            append_le_u32(out, static_cast<std::uint32_t>(layer.bias.size()));
            for (float b : layer.bias.data()) append_le_f32(out, b);
        }
    }
    return out;
}

PyramidModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader in(bytes);
    in.magic();
    in.expect_u32(kCheckpointVersion, "version");
    const std::size_t count_offset = in.offset();
    const std::uint32_t levels = in.u32("level count");
    if (levels == 0) throw FormatError("checkpoint offset " + std::to_string(count_offset) + ": level count is 0");

    PyramidModel model;
    for (std::uint32_t k = 0; k < levels; ++k) {
        const std::string level = "level " + std::to_string(k);
        in.expect_u32(kLevelLayers, level + " layer count");
        LevelNetwork net = LevelNetwork::zeros();
        for (int l = 0; l < kLevelLayers; ++l) {
            const std::string where = level + " layer " + std::to_string(l + 1);
            auto& layer = net.layers[l];
            in.expect_u32(static_cast<std::uint32_t>(kLevelChannels[l + 1]), where + " output channels");
            in.expect_u32(static_cast<std::uint32_t>(kLevelChannels[l]), where + " input channels");
            in.expect_u32(kKernelSize, where + " kernel height");
            in.expect_u32(kKernelSize, where + " kernel width");
            in.floats(layer.weights.data(), where + " weights");
            in.expect_u32(static_cast<std::uint32_t>(kLevelChannels[l + 1]), where + " bias length");
            in.floats(layer.bias.data(), where + " bias");
        }
        model.networks.push_back(std::move(net));
    }
    if (in.offset() != bytes.size()) {
        throw FormatError("checkpoint offset " + std::to_string(in.offset()) + ": " +
                          std::to_string(bytes.size() - in.offset()) + " unexpected trailing bytes");
    }
    return model;
}

void save_checkpoint(const PyramidModel& model, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_checkpoint(model));
}

PyramidModel load_checkpoint(const std::filesystem::path& path) {
    try {
        return deserialize_checkpoint(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::size_t checkpoint_size(const PyramidModel& model) {
    std::size_t n = 12;
    for (const auto& net : model.networks) {
        n += 4;
        for (const auto& layer : net.layers) n += 16 + 4 * layer.weights.size() + 4 + 4 * layer.bias.size();
    }
    return n;
}

}  // namespace spyflow
