#include "emocomp/labels.hpp"

namespace emocomp {

std::string_view label_name(EmotionLabel e) {
  switch (e) {
    case EmotionLabel::kHappy:
      return "happy";
    case EmotionLabel::kNeutral:
      return "neutral";
    case EmotionLabel::kSad:
      return "sad";
    case EmotionLabel::kAngry:
      return "angry";
  }
  return "neutral";
}

std::optional<EmotionLabel> label_from_name(std::string_view name) {
  if (name == "happy") return EmotionLabel::kHappy;
  if (name == "neutral") return EmotionLabel::kNeutral;
  if (name == "sad") return EmotionLabel::kSad;
  if (name == "angry") return EmotionLabel::kAngry;
  return std::nullopt;
}

std::optional<RawEmotion> raw_emotion_from_name(std::string_view name) {
  if (name == "angry") return RawEmotion::kAngry;
  if (name == "disgusted") return RawEmotion::kDisgusted;
  if (name == "fearful") return RawEmotion::kFearful;
  if (name == "happy") return RawEmotion::kHappy;
  if (name == "neutral") return RawEmotion::kNeutral;
  if (name == "other") return RawEmotion::kOther;
  if (name == "sad") return RawEmotion::kSad;
  if (name == "surprised") return RawEmotion::kSurprised;
  if (name == "unknown") return RawEmotion::kUnknown;
  return std::nullopt;
}

}  // namespace emocomp
