// Speech output via the browser's built-in voice; skippable for silent
// environments (tests, headless runs, muted operators).

export class Speech {
  muted = false;

  speak(text: string): void {
    if (this.muted || typeof speechSynthesis === "undefined") return;
    const utterance = new SpeechSynthesisUtterance(text);
    utterance.rate = 1.05;
    speechSynthesis.cancel(); // one utterance at a time; latest wins
    speechSynthesis.speak(utterance);
  }

  alertTone(): void {
    if (this.muted || typeof window === "undefined") return;
    // short beep; falls back silently where WebAudio is unavailable
    try {
      const ctx = new AudioContext();
      const osc = ctx.createOscillator();
      const gain = ctx.createGain();
      osc.frequency.value = 880;
      gain.gain.value = 0.12;
      osc.connect(gain).connect(ctx.destination);
      osc.start();
      osc.stop(ctx.currentTime + 0.25);
      osc.onended = () => ctx.close();
    } catch {
      /* no audio device */
    }
  }
}
