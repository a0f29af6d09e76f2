"""Why naive retraining on partially cleaned data is dangerous.

Ten points whose true trend has slope +2 get their labels corrupted so the
dirty trend is nearly flat. Cleaning just the two highest-x records and
refitting on the mixture flips the fitted slope negative: the model is now
worse than if nobody had cleaned anything. The progressive updater avoids
this trap by reweighting the still-dirty records instead of pretending the
mixture is a dataset.
"""

from cleantrain.harness import simpson_demo

out = simpson_demo()

print("ten records, labels corrupted downward at high x")
print(f"  slope fit on fully clean data:   {out['clean_slope']:+.3f}")
print(f"  slope fit on fully dirty data:   {out['dirty_slope']:+.3f}")
print(f"  slope after cleaning records {out['cleaned_ids']} and refitting on the mix: "
      f"{out['mixed_slope']:+.3f}")

flipped = out["mixed_slope"] * out["clean_slope"] < 0
print(f"\ntrend direction flipped by partial cleaning: {flipped}")
