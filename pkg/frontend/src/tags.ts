/**
 * Free-form error-class tags, mapped to the small integers the service
 * expects. 0 is reserved for "clean / no error"; the first novel label
 * gets 1, the next 2, and so on, so the class count can grow as the
 * analyst discovers new kinds of errors mid-session.
 */

export class TagRegistry {
  private byKey = new Map<string, number>();
  private labels: string[] = [];

  /** Labels seen so far, in first-use order (for datalist suggestions). */
  known(): string[] {
    return [...this.labels];
  }

  /** Map a free-form label to its integer class, assigning one if new. */
  toInt(label: string): number {
    const key = label.trim().toLowerCase();
    if (key === "" || key === "clean") return 0;
    let id = this.byKey.get(key);
    if (id === undefined) {
      id = this.byKey.size + 1;
      this.byKey.set(key, id);
      this.labels.push(label.trim());
    }
    return id;
  }

  /** Display label for an integer class (falls back to "#n"). */
  label(id: number): string {
    if (id === 0) return "clean";
    return this.labels[id - 1] ?? `#${id}`;
  }
}
