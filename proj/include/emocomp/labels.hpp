#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace emocomp {

/// The four working emotion categories. The order is fixed and used for
/// confusion-matrix indexing and argmax tie-breaking.
enum class EmotionLabel : int { kHappy = 0, kNeutral = 1, kSad = 2, kAngry = 3 };

constexpr int kNumEmotions = 4;

constexpr std::array<EmotionLabel, 4> kAllEmotions = {
    EmotionLabel::kHappy, EmotionLabel::kNeutral, EmotionLabel::kSad,
    EmotionLabel::kAngry};

/// Nine-class labels as produced by upstream emotion taggers.
enum class RawEmotion : int {
  kAngry = 0,
  kDisgusted,
  kFearful,
  kHappy,
  kNeutral,
  kOther,
  kSad,
  kSurprised,
  kUnknown
};

/// Collapses the nine-class scheme onto the four working categories:
/// disgusted and fearful fold into sad, surprised into happy, unknown and
/// other into neutral.
constexpr EmotionLabel map_nine_to_four(RawEmotion raw) {
  switch (raw) {
    case RawEmotion::kAngry:
      return EmotionLabel::kAngry;
    case RawEmotion::kDisgusted:
    case RawEmotion::kFearful:
    case RawEmotion::kSad:
      return EmotionLabel::kSad;
    case RawEmotion::kHappy:
    case RawEmotion::kSurprised:
      return EmotionLabel::kHappy;
    case RawEmotion::kNeutral:
    case RawEmotion::kOther:
    case RawEmotion::kUnknown:
      return EmotionLabel::kNeutral;
  }
  return EmotionLabel::kNeutral;
}

inline int label_index(EmotionLabel e) { return static_cast<int>(e); }

std::string_view label_name(EmotionLabel e);
std::optional<EmotionLabel> label_from_name(std::string_view name);
std::optional<RawEmotion> raw_emotion_from_name(std::string_view name);

}  // namespace emocomp
