#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gazevit/image.hpp"
#include "gazevit/tensor.hpp"

namespace gazevit::sync {

struct FrameRecord {
    long frame_id = 0;
    double t_emit = 0.0;  // seconds
    std::string image_ref;
};

struct GazeSample {
    long frame_id = 0;
    GazePoint left;
    GazePoint right;
    double t_arrive = 0.0;
};

enum class Provenance : std::uint8_t { Measured = 0, Interpolated = 1 };
std::string_view to_string(Provenance p);

struct AlignedGaze {
    long frame_id = 0;
    GazePoint left;
    GazePoint right;
    Provenance provenance = Provenance::Interpolated;
    bool operator==(const AlignedGaze&) const = default;
};

// Frames with IDs start_id, start_id + 1, ... emitted at i / fps.
std::vector<FrameRecord> make_frames(int count, double fps, long start_id = 0);

/// One gaze value per frame. Labeled frames keep their sample verbatim,
/// frames between labels are interpolated linearly in frame ID, frames
/// outside the labeled span hold the nearest label. When a frame has several
/// samples the earliest arrival wins. Arrival order is otherwise ignored.
std::vector<AlignedGaze> align_gaze(const std::vector<FrameRecord>& frames, const std::vector<GazeSample>& samples);

enum class Jitter { None, Uniform, Exponential };
std::string_view to_string(Jitter j);
Jitter parse_jitter(std::string_view name);

struct LatencyModel {
    double base_delay = 0.0;  // seconds
    Jitter jitter = Jitter::None;
    double jitter_scale = 0.0;  // uniform width or exponential mean, seconds
    double drop_probability = 0.0;
    void validate() const;
};

using GazeFunction = std::function<std::pair<GazePoint, GazePoint>(double t)>;

// Drops and delays come from independent streams, so models that differ
// only in delay deliver the same samples. Output is in arrival order.
std::vector<GazeSample> simulate_stream(const std::vector<FrameRecord>& frames, const GazeFunction& gaze,
                                        const LatencyModel& latency, std::uint64_t seed);

/// x = c + a sin(2 pi f t), y = c + a cos(2 pi f t); the eyes sit +-eye_offset in x.
struct SinusoidGaze {
    double frequency = 0.5;
    double center = 0.5;
    double amplitude = 0.1;
    double eye_offset = 0.01;
    GazePoint operator()(double t) const;
    std::pair<GazePoint, GazePoint> eyes(double t) const;
    GazeFunction function() const {
        return [s = *this](double t) { return s.eyes(t); };
    }
};

struct AlignmentError {
    double max_error = 0.0;   // Euclidean, frames between two labels
    double mean_error = 0.0;
    double max_hold_error = 0.0;  // frames outside the labeled span
    int interpolated_frames = 0;
    int hold_frames = 0;
    int measured_frames = 0;
    int max_gap = 0;  // largest ID distance between consecutive labels
};

// Compares the merged (left/right average) aligned gaze with the merged truth.
AlignmentError alignment_error(const std::vector<FrameRecord>& frames, const std::vector<AlignedGaze>& aligned,
                               const GazeFunction& truth);

// Keeps the samples whose frame index is a multiple of `gap`.
std::vector<GazeSample> decimate(const std::vector<GazeSample>& samples, int gap);

struct EpisodeRow {
    long frame_id = 0;
    std::string image_ref;
    RowVec joints;
    RowVec action;
    GazePoint gaze_left;
    GazePoint gaze_right;
    Provenance provenance = Provenance::Interpolated;
    bool operator==(const EpisodeRow& o) const;
};

struct EpisodeLog {
    double rate = 25.0;
    std::vector<EpisodeRow> rows;
    bool operator==(const EpisodeLog&) const = default;
};

// Joins the aligned gaze with per-frame joints and actions (one row each).
EpisodeLog record_episode(const std::vector<FrameRecord>& frames, const std::vector<AlignedGaze>& gaze,
                          const Mat& joints, const Mat& actions, double rate = 25.0);

// Writes manifest.txt, columns.bin and (optionally) images/<frame_id>.png.
void write_episode(const EpisodeLog& log, const std::filesystem::path& dir,
                   const std::vector<ImageBuffer>* images = nullptr);
EpisodeLog read_episode(const std::filesystem::path& dir);

std::string image_ref_for(long frame_id);

}  // namespace gazevit::sync
