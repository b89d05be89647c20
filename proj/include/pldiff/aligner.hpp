#pragma once

#include <string>
#include <vector>

namespace pldiff {

// Row-major P x F matrix of doubles. The DP runs in double regardless of
// training precision so accumulation error cannot flip paths.
struct LogLikMatrix {
    int phonemes = 0;
    int frames = 0;
    std::vector<double> v;

    double& at(int p, int f) { return v[static_cast<std::size_t>(p) * frames + f]; }
    double at(int p, int f) const { return v[static_cast<std::size_t>(p) * frames + f]; }
};

// Monotone surjective alignment stored as the phoneme index of each frame.
// Column f of the 0/1 matrix has its single 1 at row frame_phoneme[f].
struct AlignmentPath {
    int phonemes = 0;
    std::vector<int> frame_phoneme;

    int frames() const { return static_cast<int>(frame_phoneme.size()); }
    std::vector<std::vector<int>> matrix() const;
    double score(const LogLikMatrix& loglik) const;
};

// Diagonal-Gaussian log-density of every frame under every phoneme's stats.
// means/vars: P x d row-major, frames: F x d row-major, all variances > 0.
LogLikMatrix likelihood_matrix(const std::vector<double>& means, const std::vector<double>& vars,
                               int phonemes, const std::vector<double>& frame_features, int frames,
                               int dim);

// Maximum-likelihood monotone alignment via dynamic programming.
// Ties prefer staying on the current phoneme.
AlignmentPath mas(const LogLikMatrix& loglik);

std::vector<int> durations_from_path(const AlignmentPath& path);

void write_durations_csv(const std::string& path, const std::vector<std::string>& utterance_ids,
                         const std::vector<std::vector<int>>& durations);

}  // namespace pldiff
