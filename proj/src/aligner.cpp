#include "pldiff/aligner.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pldiff {

std::vector<std::vector<int>> AlignmentPath::matrix() const {
    std::vector<std::vector<int>> m(static_cast<std::size_t>(phonemes),
                                    std::vector<int>(frame_phoneme.size(), 0));
    for (std::size_t f = 0; f < frame_phoneme.size(); ++f)
        m[static_cast<std::size_t>(frame_phoneme[f])][f] = 1;
    return m;
}

double AlignmentPath::score(const LogLikMatrix& loglik) const {
    double s = 0.0;
    for (int f = 0; f < frames(); ++f) s += loglik.at(frame_phoneme[static_cast<std::size_t>(f)], f);
    return s;
}

LogLikMatrix likelihood_matrix(const std::vector<double>& means, const std::vector<double>& vars,
                               int phonemes, const std::vector<double>& frame_features, int frames,
                               int dim) {
    if (phonemes < 1 || frames < phonemes)
        throw std::invalid_argument("likelihood_matrix: need 1 <= P <= F");
    if (means.size() != static_cast<std::size_t>(phonemes) * dim ||
        vars.size() != static_cast<std::size_t>(phonemes) * dim ||
        frame_features.size() != static_cast<std::size_t>(frames) * dim)
        throw std::invalid_argument("likelihood_matrix: size mismatch");
    for (double v : vars)
        if (!(v > 0.0)) throw std::invalid_argument("likelihood_matrix: variances must be > 0");

    const double ln2pi = std::log(2.0 * 3.14159265358979323846);
    LogLikMatrix out;
    out.phonemes = phonemes;
    out.frames = frames;
    out.v.resize(static_cast<std::size_t>(phonemes) * frames);
    for (int p = 0; p < phonemes; ++p) {
        for (int f = 0; f < frames; ++f) {
            double ll = 0.0;
            for (int d = 0; d < dim; ++d) {
                const double m = means[static_cast<std::size_t>(p) * dim + d];
                const double var = vars[static_cast<std::size_t>(p) * dim + d];
                const double x = frame_features[static_cast<std::size_t>(f) * dim + d];
                const double diff = x - m;
                ll += -0.5 * (ln2pi + std::log(var) + diff * diff / var);
            }
            out.at(p, f) = ll;
        }
    }
    return out;
}

AlignmentPath mas(const LogLikMatrix& loglik) {
    const int P = loglik.phonemes, F = loglik.frames;
    if (P < 1 || F < P) throw std::invalid_argument("mas: need 1 <= P <= F");

    const double neg_inf = -std::numeric_limits<double>::infinity();
    // Q(p,f): best total score of any valid partial path ending at (p,f).
    std::vector<double> q(static_cast<std::size_t>(P) * F, neg_inf);
    // true where the best predecessor is (p, f-1), i.e. stay on phoneme p
    std::vector<char> stay(static_cast<std::size_t>(P) * F, 0);

    for (int f = 0; f < F; ++f) {
        for (int p = 0; p < P; ++p) {
            if (p > f) continue;               // phoneme p needs at least p prior frames
            if (P - 1 - p > F - 1 - f) continue;  // remaining phonemes must fit
            const std::size_t i = static_cast<std::size_t>(p) * F + f;
            if (f == 0) {
                q[i] = loglik.at(p, f);  // only p == 0 survives the bounds above
                continue;
            }
            const double from_stay = q[static_cast<std::size_t>(p) * F + f - 1];
            const double from_prev = p > 0 ? q[static_cast<std::size_t>(p - 1) * F + f - 1] : neg_inf;
            if (from_stay >= from_prev) {
                q[i] = loglik.at(p, f) + from_stay;
                stay[i] = 1;
            } else {
                q[i] = loglik.at(p, f) + from_prev;
            }
        }
    }

    AlignmentPath path;
    path.phonemes = P;
    path.frame_phoneme.assign(static_cast<std::size_t>(F), 0);
    int p = P - 1;
    for (int f = F - 1; f >= 0; --f) {
        path.frame_phoneme[static_cast<std::size_t>(f)] = p;
        if (f > 0 && !stay[static_cast<std::size_t>(p) * F + f]) --p;
    }
    return path;
}

std::vector<int> durations_from_path(const AlignmentPath& path) {
    if (path.phonemes < 1 || path.frames() < path.phonemes)
        throw std::invalid_argument("durations_from_path: invalid path");
    std::vector<int> dur(static_cast<std::size_t>(path.phonemes), 0);
    int prev = -1;
    for (int f = 0; f < path.frames(); ++f) {
        const int p = path.frame_phoneme[static_cast<std::size_t>(f)];
        if (p < 0 || p >= path.phonemes || p < prev || p > prev + 1)
            throw std::invalid_argument("durations_from_path: path is not monotone");
        ++dur[static_cast<std::size_t>(p)];
        prev = p;
    }
    if (prev != path.phonemes - 1)
        throw std::invalid_argument("durations_from_path: path does not cover all phonemes");
    return dur;
}

void write_durations_csv(const std::string& path, const std::vector<std::string>& utterance_ids,
                         const std::vector<std::vector<int>>& durations) {
    if (utterance_ids.size() != durations.size())
        throw std::invalid_argument("write_durations_csv: id/duration count mismatch");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_durations_csv: cannot open " + path);
    f << "utterance_id,phoneme_index,frames\n";
    for (std::size_t u = 0; u < durations.size(); ++u)
        for (std::size_t p = 0; p < durations[u].size(); ++p)
            f << utterance_ids[u] << ',' << p << ',' << durations[u][p] << '\n';
}

}  // namespace pldiff
