#pragma once

#include <stdexcept>
#include <string>

namespace clipit {

// Coarse failure classes, mapped to CLI exit codes (usage=2, input=3, runtime=4).
enum class ErrorClass { Usage, Input, Runtime };

// Base of every library error. `category()` is a stable machine-parsable
// token; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(ErrorClass klass, std::string category, const std::string& msg)
        : std::runtime_error(category + ": " + msg),
          klass_(klass),
          category_(std::move(category)) {}

    ErrorClass error_class() const { return klass_; }
    const std::string& category() const { return category_; }

private:
    ErrorClass klass_;
    std::string category_;
};

#define CLIPIT_DEFINE_ERROR(NAME, KLASS)                                \
    class NAME##Error : public Error {                                  \
    public:                                                             \
        explicit NAME##Error(const std::string& msg)                    \
            : Error(ErrorClass::KLASS, #NAME, msg) {}                   \
    }

// numeric-core
CLIPIT_DEFINE_ERROR(ZeroVector, Runtime);
CLIPIT_DEFINE_ERROR(DimensionMismatch, Runtime);
CLIPIT_DEFINE_ERROR(ShapeMismatch, Runtime);
CLIPIT_DEFINE_ERROR(InvalidDistribution, Runtime);
CLIPIT_DEFINE_ERROR(IndexOutOfRange, Runtime);
CLIPIT_DEFINE_ERROR(NonFiniteInput, Runtime);
CLIPIT_DEFINE_ERROR(NonFiniteLoss, Runtime);

// data-model / files
CLIPIT_DEFINE_ERROR(Io, Input);
CLIPIT_DEFINE_ERROR(BadMagic, Input);
CLIPIT_DEFINE_ERROR(UnsupportedVersion, Input);
CLIPIT_DEFINE_ERROR(TruncatedFile, Input);
CLIPIT_DEFINE_ERROR(LabelLengthMismatch, Input);
CLIPIT_DEFINE_ERROR(MalformedLine, Input);
CLIPIT_DEFINE_ERROR(DuplicateId, Input);
CLIPIT_DEFINE_ERROR(EmptyText, Input);
CLIPIT_DEFINE_ERROR(EmptyFilterResult, Input);
CLIPIT_DEFINE_ERROR(MissingLabels, Input);
CLIPIT_DEFINE_ERROR(MissingIds, Input);

// pairing / training
CLIPIT_DEFINE_ERROR(RankExceedsCorpus, Input);
CLIPIT_DEFINE_ERROR(EmptyDataset, Input);

// eval-stats
CLIPIT_DEFINE_ERROR(LengthMismatch, Runtime);
CLIPIT_DEFINE_ERROR(EmptyInput, Runtime);
CLIPIT_DEFINE_ERROR(MissingTextPredictions, Runtime);
CLIPIT_DEFINE_ERROR(InvalidPValue, Runtime);

// synthgen
CLIPIT_DEFINE_ERROR(ConfigInvalid, Usage);
CLIPIT_DEFINE_ERROR(InstanceMismatch, Runtime);

#undef CLIPIT_DEFINE_ERROR

}  // namespace clipit
