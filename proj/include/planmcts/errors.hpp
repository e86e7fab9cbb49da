#pragma once

#include <stdexcept>
#include <string>

namespace planmcts {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define PLANMCTS_ERROR_TYPE(Name)                \
  struct Name : Error {                          \
    using Error::Error;                          \
  }

PLANMCTS_ERROR_TYPE(EmptyFrontier);
PLANMCTS_ERROR_TYPE(AlreadyExpanded);
PLANMCTS_ERROR_TYPE(ExhaustedTree);
PLANMCTS_ERROR_TYPE(UnknownTask);
PLANMCTS_ERROR_TYPE(StaleHandle);
PLANMCTS_ERROR_TYPE(InfeasibleParams);
PLANMCTS_ERROR_TYPE(UnboundPlaceholder);
PLANMCTS_ERROR_TYPE(ProposalParseFailure);
PLANMCTS_ERROR_TYPE(DecisionParseFailure);
PLANMCTS_ERROR_TYPE(ReflectorParseFailure);
PLANMCTS_ERROR_TYPE(StatusParseFailure);
PLANMCTS_ERROR_TYPE(EndpointUnavailable);
PLANMCTS_ERROR_TYPE(PolicyFailure);
PLANMCTS_ERROR_TYPE(MismatchedTaskSets);
PLANMCTS_ERROR_TYPE(SchemaError);

#undef PLANMCTS_ERROR_TYPE

}  // namespace planmcts
