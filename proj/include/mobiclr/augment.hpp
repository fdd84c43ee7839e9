#pragma once

#include "mobiclr/common.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace mobiclr::augment {

enum class Kind { Jitter, Shift, Scale, Dropout };
enum class JitterMode { Additive, Multiplicative };
/// Literal draws the scale factor from N(0, sigma); MeanOne from N(1, sigma).
enum class ScaleMode { Literal, MeanOne };

std::string to_string(Kind kind);
Kind kind_from_string(const std::string& name);

struct Spec {
    Kind kind = Kind::Jitter;
    double sigma = 0.2;      // jitter / shift / scale
    double drop_prob = 0.1;  // dropout
    JitterMode jitter_mode = JitterMode::Additive;
    ScaleMode scale_mode = ScaleMode::Literal;

    static Spec jitter(double sigma = 0.2, JitterMode mode = JitterMode::Additive);
    static Spec shift(double sigma = 0.2);
    static Spec scale(double sigma = 0.2, ScaleMode mode = ScaleMode::Literal);
    static Spec dropout(double drop_prob = 0.1);

    void validate() const;
};

/// Applied left to right; empty is the identity.
using Pipeline = std::vector<Spec>;

Pipeline default_pipeline();  // [jitter, shift]

/// Random draws consumed by one transform. Jitter: T x C noise. Shift and
/// scale: 1 x 1 scalar. Dropout: T x C keep-mask of 0/1.
struct StepDraw {
    Kind kind = Kind::Jitter;
    Mat values;
};
using Draws = std::vector<StepDraw>;

// Pure transforms given explicit draws.
Mat jitter_with(const Mat& x, const Mat& eps, JitterMode mode);
Mat shift_with(const Mat& x, double eps);
Mat scale_with(const Mat& x, double factor);
Mat dropout_with(const Mat& x, const Mat& keep_mask);

// Sampling transforms.
Mat apply_jitter(const Mat& x, double sigma, JitterMode mode, Rng& rng, StepDraw* record = nullptr);
Mat apply_shift(const Mat& x, double sigma, Rng& rng, StepDraw* record = nullptr);
Mat apply_scale(const Mat& x, double sigma, ScaleMode mode, Rng& rng, StepDraw* record = nullptr);
Mat apply_dropout(const Mat& x, double drop_prob, Rng& rng, StepDraw* record = nullptr);

StepDraw sample_draw(const Spec& spec, Eigen::Index rows, Eigen::Index cols, Rng& rng);
Mat apply_draw(const Mat& x, const Spec& spec, const StepDraw& draw);

Mat apply_pipeline(const Mat& x, const Pipeline& pipeline, Rng& rng, Draws* record = nullptr);
Mat replay(const Mat& x, const Pipeline& pipeline, const Draws& draws);

struct ViewPair {
    Mat view_a;
    Mat view_b;
    Draws draws_a;
    Draws draws_b;
};

/// Two independent applications of the pipeline. For a T x 2 inbound/outbound
/// series the flow views are the columns of the joint views, so all three
/// encoders see the same draws.
ViewPair two_views(const Mat& x, const Pipeline& pipeline, Rng& rng);

nlohmann::json to_json(const Spec& spec);
nlohmann::json to_json(const Pipeline& pipeline);
Spec spec_from_json(const nlohmann::json& j);
Pipeline pipeline_from_json(const nlohmann::json& j);
nlohmann::json draws_to_json(const Draws& draws);

}  // namespace mobiclr::augment
