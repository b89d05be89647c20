#include "pldiff/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pldiff/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pldiff {

namespace {

constexpr std::uint64_t kStreamEmbed = 0x01;
constexpr std::uint64_t kStreamAmps = 0x02;
constexpr std::uint64_t kStreamSpeaker = 0x1000;
constexpr std::uint64_t kStreamUtt = 0x100000;

constexpr double kTwoPi = 6.283185307179586476925287;

}  // namespace

std::vector<float> FeatureFrames::stacked() const {
    std::vector<float> out(static_cast<std::size_t>(count) * feat_dim());
    for (int f = 0; f < count; ++f) {
        float* row = out.data() + static_cast<std::size_t>(f) * feat_dim();
        std::memcpy(row, linguistic.data() + static_cast<std::size_t>(f) * d_ling,
                    sizeof(float) * static_cast<std::size_t>(d_ling));
        row[d_ling] = f0_norm[static_cast<std::size_t>(f)];
        row[d_ling + 1] = amp_periodic[static_cast<std::size_t>(f)];
        row[d_ling + 2] = amp_aperiodic[static_cast<std::size_t>(f)];
    }
    return out;
}

double midi_normalize(double f0_hz) {
    if (f0_hz < 0.0) throw std::invalid_argument("midi_normalize: negative f0");
    if (f0_hz == 0.0) return 0.0;  // unvoiced sentinel
    return (69.0 + 12.0 * std::log2(f0_hz / 440.0)) / 84.0;
}

bool phoneme_is_voiced(int id) { return id % 4 != 0; }

void Dataset::phoneme_stats(int utt, std::vector<double>& means, std::vector<double>& vars) const {
    const Utterance& u = utterances[static_cast<std::size_t>(utt)];
    const SpeakerProfile& spk = speakers[static_cast<std::size_t>(u.speaker)];
    const int d = params.d_ling;
    const int p_count = u.phonemes.length();
    means.resize(static_cast<std::size_t>(p_count) * d);
    vars.resize(static_cast<std::size_t>(p_count) * d);
    const double var = std::max(params.jitter * params.jitter, 1e-6);
    for (int p = 0; p < p_count; ++p) {
        const int id = u.phonemes.ids[static_cast<std::size_t>(p)];
        for (int k = 0; k < d; ++k) {
            means[static_cast<std::size_t>(p) * d + k] =
                static_cast<double>(phoneme_embed[static_cast<std::size_t>(id) * d + k]) +
                static_cast<double>(spk.ling_offset[static_cast<std::size_t>(id) * d + k]);
            vars[static_cast<std::size_t>(p) * d + k] = var;
        }
    }
}

Dataset gen_corpus(const CorpusParams& params) {
    if (params.n_speakers < 1 || params.utts_per_speaker < 1 || params.phoneme_len_min < 1 ||
        params.phoneme_len_max < params.phoneme_len_min || params.vocab < 2 || params.d_ling < 1)
        throw std::invalid_argument("gen_corpus: bad parameters");

    Dataset ds;
    ds.params = params;
    const Rng root(params.seed);
    const int v = params.vocab, d = params.d_ling;

    {
        Rng r = root.fork(kStreamEmbed);
        ds.phoneme_embed.resize(static_cast<std::size_t>(v) * d);
        for (auto& x : ds.phoneme_embed) x = static_cast<float>(r.normal());
    }

    // per-class amplitude levels, shared across speakers
    std::vector<double> amp_u(static_cast<std::size_t>(v)), amp_v(static_cast<std::size_t>(v));
    {
        Rng r = root.fork(kStreamAmps);
        for (int id = 0; id < v; ++id) {
            amp_u[static_cast<std::size_t>(id)] = r.uniform();
            amp_v[static_cast<std::size_t>(id)] = r.uniform();
        }
    }

    for (int s = 0; s < params.n_speakers; ++s) {
        Rng r = root.fork(kStreamSpeaker + static_cast<std::uint64_t>(s));
        SpeakerProfile sp;
        sp.seed = r.seed();
        sp.base_f0_hz = r.uniform(120.0, 300.0);
        sp.rate = r.uniform(0.8, 1.25);
        sp.amp_gain = r.uniform(0.8, 1.2);
        sp.ling_offset.resize(static_cast<std::size_t>(v) * d);
        // per-phoneme offsets share a persistent per-speaker bias, so every
        // frame carries the speaker signature the way timbre does
        std::vector<double> bias(static_cast<std::size_t>(d));
        for (auto& x : bias) x = r.normal() * params.speaker_offset_scale;
        for (int id = 0; id < v; ++id)
            for (int k = 0; k < d; ++k)
                sp.ling_offset[static_cast<std::size_t>(id) * d + k] = static_cast<float>(
                    bias[static_cast<std::size_t>(k)] + r.normal() * params.speaker_offset_scale * 0.6);
        ds.speakers.push_back(std::move(sp));
    }

    for (int s = 0; s < params.n_speakers; ++s) {
        const SpeakerProfile& sp = ds.speakers[static_cast<std::size_t>(s)];
        for (int ui = 0; ui < params.utts_per_speaker; ++ui) {
            Rng r = root.fork(kStreamUtt + static_cast<std::uint64_t>(s) * 4096 +
                              static_cast<std::uint64_t>(ui));
            Utterance utt;
            utt.speaker = s;

            const int len = r.uniform_int(params.phoneme_len_min, params.phoneme_len_max);
            utt.phonemes.ids.resize(static_cast<std::size_t>(len));
            for (auto& id : utt.phonemes.ids) id = r.uniform_int(0, v - 1);
            int pos = 0;
            while (pos < len) {
                utt.phonemes.word_starts.push_back(pos);
                pos += r.uniform_int(1, 4);
            }

            utt.durations.resize(static_cast<std::size_t>(len));
            int frames = 0;
            for (auto& dur : utt.durations) {
                const int base = r.uniform_int(2, 12);
                dur = std::max(1, static_cast<int>(std::lround(base * sp.rate)));
                frames += dur;
            }

            FeatureFrames& ff = utt.features;
            ff.count = frames;
            ff.d_ling = d;
            ff.linguistic.resize(static_cast<std::size_t>(frames) * d);
            ff.f0_norm.resize(static_cast<std::size_t>(frames));
            ff.amp_periodic.resize(static_cast<std::size_t>(frames));
            ff.amp_aperiodic.resize(static_cast<std::size_t>(frames));

            const double cycles = r.uniform(1.0, 2.5);
            const double phase = r.uniform(0.0, kTwoPi);
            int f = 0;
            for (int p = 0; p < len; ++p) {
                const int id = utt.phonemes.ids[static_cast<std::size_t>(p)];
                const bool voiced = phoneme_is_voiced(id);
                for (int k = 0; k < utt.durations[static_cast<std::size_t>(p)]; ++k, ++f) {
                    float* row = ff.linguistic.data() + static_cast<std::size_t>(f) * d;
                    for (int c = 0; c < d; ++c)
                        row[c] = ds.phoneme_embed[static_cast<std::size_t>(id) * d + c] +
                                 sp.ling_offset[static_cast<std::size_t>(id) * d + c] +
                                 static_cast<float>(r.normal() * params.jitter);
                    if (voiced) {
                        const double pos01 = frames > 1 ? static_cast<double>(f) / (frames - 1) : 0.0;
                        const double hz = sp.base_f0_hz * (1.0 + 0.08 * std::sin(kTwoPi * cycles * pos01 + phase));
                        ff.f0_norm[static_cast<std::size_t>(f)] = static_cast<float>(midi_normalize(hz));
                    } else {
                        ff.f0_norm[static_cast<std::size_t>(f)] = 0.0f;
                    }
                    const double au = amp_u[static_cast<std::size_t>(id)];
                    const double av = amp_v[static_cast<std::size_t>(id)];
                    const double ap = voiced ? 0.4 + 0.5 * au : 0.05 + 0.1 * au;
                    const double aa = voiced ? 0.05 + 0.1 * av : 0.4 + 0.5 * av;
                    ff.amp_periodic[static_cast<std::size_t>(f)] = static_cast<float>(sp.amp_gain * ap);
                    ff.amp_aperiodic[static_cast<std::size_t>(f)] = static_cast<float>(sp.amp_gain * aa);
                }
            }
            ds.utterances.push_back(std::move(utt));
        }
    }
    return ds;
}

// ---- on-disk format ----

std::uint32_t crc32(const void* data, std::size_t len) {
    static std::uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    std::uint32_t crc = 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

void write_f32_blob(const std::string& path, const std::vector<float>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("short write: " + path);
}

namespace {

struct BlobWriter {
    std::vector<float> blob;
    json arrays = json::array();

    void add(const std::string& name, const std::vector<float>& data, std::vector<int> shape) {
        std::size_t n = 1;
        for (int dim : shape) n *= static_cast<std::size_t>(dim);
        if (n != data.size()) throw std::logic_error("BlobWriter: shape/data mismatch for " + name);
        json a;
        a["name"] = name;
        a["shape"] = shape;
        a["elements"] = data.size();
        a["offset"] = blob.size() * sizeof(float);
        a["crc32"] = crc32(data.data(), data.size() * sizeof(float));
        arrays.push_back(a);
        blob.insert(blob.end(), data.begin(), data.end());
    }
};

struct BlobReader {
    std::vector<char> bytes;

    explicit BlobReader(const std::string& path) {
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw std::runtime_error("cannot open blob: " + path);
        const auto size = f.tellg();
        f.seekg(0);
        bytes.resize(static_cast<std::size_t>(size));
        f.read(bytes.data(), size);
        if (!f) throw std::runtime_error("short read: " + path);
    }

    std::vector<float> fetch(const json& a) const {
        const std::string name = a.at("name").get<std::string>();
        const auto shape = a.at("shape").get<std::vector<int>>();
        const auto elements = a.at("elements").get<std::size_t>();
        const auto offset = a.at("offset").get<std::size_t>();
        std::size_t n = 1;
        for (int dim : shape) {
            if (dim <= 0) throw std::runtime_error("dataset: bad shape for array " + name);
            n *= static_cast<std::size_t>(dim);
        }
        if (n != elements)
            throw std::runtime_error("dataset: shape mismatch for array " + name);
        const std::size_t nbytes = elements * sizeof(float);
        if (offset + nbytes > bytes.size())
            throw std::runtime_error("dataset: checksum failure (blob truncated) for array " + name);
        if (a.at("crc32").get<std::uint32_t>() != crc32(bytes.data() + offset, nbytes))
            throw std::runtime_error("dataset: checksum failure for array " + name);
        std::vector<float> out(elements);
        std::memcpy(out.data(), bytes.data() + offset, nbytes);
        return out;
    }
};

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    BlobWriter bw;
    bw.add("phoneme_embed", ds.phoneme_embed, {ds.params.vocab, ds.params.d_ling});
    for (std::size_t s = 0; s < ds.speakers.size(); ++s)
        bw.add("speaker" + std::to_string(s) + ".ling_offset", ds.speakers[s].ling_offset,
               {ds.params.vocab, ds.params.d_ling});
    for (std::size_t u = 0; u < ds.utterances.size(); ++u) {
        const auto& ff = ds.utterances[u].features;
        const std::string base = "utt" + std::to_string(u);
        bw.add(base + ".linguistic", ff.linguistic, {ff.count, ff.d_ling});
        bw.add(base + ".f0_norm", ff.f0_norm, {ff.count});
        bw.add(base + ".amp_periodic", ff.amp_periodic, {ff.count});
        bw.add(base + ".amp_aperiodic", ff.amp_aperiodic, {ff.count});
    }

    json manifest;
    manifest["format"] = "pldiff-dataset-v1";
    manifest["blob"] = "dataset.f32";
    manifest["params"] = {{"seed", ds.params.seed},
                          {"n_speakers", ds.params.n_speakers},
                          {"utts_per_speaker", ds.params.utts_per_speaker},
                          {"phoneme_len_min", ds.params.phoneme_len_min},
                          {"phoneme_len_max", ds.params.phoneme_len_max},
                          {"jitter", ds.params.jitter},
                          {"vocab", ds.params.vocab},
                          {"d_ling", ds.params.d_ling}};
    manifest["speakers"] = json::array();
    for (const auto& sp : ds.speakers)
        manifest["speakers"].push_back({{"seed", sp.seed},
                                        {"base_f0_hz", sp.base_f0_hz},
                                        {"rate", sp.rate},
                                        {"amp_gain", sp.amp_gain}});
    manifest["utterances"] = json::array();
    for (const auto& utt : ds.utterances)
        manifest["utterances"].push_back({{"speaker", utt.speaker},
                                          {"ids", utt.phonemes.ids},
                                          {"word_starts", utt.phonemes.word_starts},
                                          {"durations", utt.durations}});
    manifest["arrays"] = bw.arrays;

    std::ofstream mf(fs::path(dir) / "dataset.json");
    if (!mf) throw std::runtime_error("cannot write dataset.json in " + dir);
    mf << manifest.dump(2) << '\n';
    write_f32_blob((fs::path(dir) / "dataset.f32").string(), bw.blob);
}

Dataset read_dataset(const std::string& dir) {
    json manifest;
    {
        std::ifstream mf(fs::path(dir) / "dataset.json");
        if (!mf) throw std::runtime_error("cannot open dataset.json in " + dir);
        try {
            mf >> manifest;
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("dataset: malformed manifest: ") + e.what());
        }
    }

    Dataset ds;
    try {
        if (manifest.at("format").get<std::string>() != "pldiff-dataset-v1")
            throw std::runtime_error("dataset: unknown format tag");
        const json& p = manifest.at("params");
        ds.params.seed = p.at("seed").get<std::uint64_t>();
        ds.params.n_speakers = p.at("n_speakers").get<int>();
        ds.params.utts_per_speaker = p.at("utts_per_speaker").get<int>();
        ds.params.phoneme_len_min = p.at("phoneme_len_min").get<int>();
        ds.params.phoneme_len_max = p.at("phoneme_len_max").get<int>();
        ds.params.jitter = p.at("jitter").get<double>();
        ds.params.vocab = p.at("vocab").get<int>();
        ds.params.d_ling = p.at("d_ling").get<int>();

        BlobReader br((fs::path(dir) / manifest.at("blob").get<std::string>()).string());
        std::size_t ai = 0;
        const json& arrays = manifest.at("arrays");
        auto next_array = [&](const std::string& expect) -> std::vector<float> {
            if (ai >= arrays.size()) throw std::runtime_error("dataset: missing array " + expect);
            const json& a = arrays[ai++];
            if (a.at("name").get<std::string>() != expect)
                throw std::runtime_error("dataset: expected array " + expect);
            return br.fetch(a);
        };

        ds.phoneme_embed = next_array("phoneme_embed");
        if (ds.phoneme_embed.size() !=
            static_cast<std::size_t>(ds.params.vocab) * ds.params.d_ling)
            throw std::runtime_error("dataset: phoneme_embed shape mismatch");

        for (const json& js : manifest.at("speakers")) {
            SpeakerProfile sp;
            sp.seed = js.at("seed").get<std::uint64_t>();
            sp.base_f0_hz = js.at("base_f0_hz").get<double>();
            sp.rate = js.at("rate").get<double>();
            sp.amp_gain = js.at("amp_gain").get<double>();
            sp.ling_offset = next_array("speaker" + std::to_string(ds.speakers.size()) + ".ling_offset");
            ds.speakers.push_back(std::move(sp));
        }

        std::size_t ui = 0;
        for (const json& ju : manifest.at("utterances")) {
            Utterance utt;
            utt.speaker = ju.at("speaker").get<int>();
            utt.phonemes.ids = ju.at("ids").get<std::vector<int>>();
            utt.phonemes.word_starts = ju.at("word_starts").get<std::vector<int>>();
            utt.durations = ju.at("durations").get<std::vector<int>>();
            const std::string base = "utt" + std::to_string(ui++);
            FeatureFrames& ff = utt.features;
            ff.d_ling = ds.params.d_ling;
            ff.linguistic = next_array(base + ".linguistic");
            ff.f0_norm = next_array(base + ".f0_norm");
            ff.amp_periodic = next_array(base + ".amp_periodic");
            ff.amp_aperiodic = next_array(base + ".amp_aperiodic");
            ff.count = static_cast<int>(ff.f0_norm.size());
            if (ff.linguistic.size() != static_cast<std::size_t>(ff.count) * ff.d_ling)
                throw std::runtime_error("dataset: linguistic shape mismatch for " + base);
            int frames = 0;
            for (int dur : utt.durations) frames += dur;
            if (frames != ff.count)
                throw std::runtime_error("dataset: durations do not sum to frame count for " + base);
            ds.utterances.push_back(std::move(utt));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("dataset: malformed manifest: ") + e.what());
    }
    return ds;
}

}  // namespace pldiff
